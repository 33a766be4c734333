//! Procedural kit-assembly datasets: one scene directory per assembly plus a
//! manifest, written incrementally so an interrupted run can resume.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use seat_core::geom::mesh::TriMesh;
use seat_core::kitgen::shapes::random_object;
use seat_core::kitgen::{build_assembly, normalize_object, KitSpec};
use seat_core::scene::{sample_scene, Scene, SceneConfig};
use seat_core::{Error, Result};

use crate::hint::derive_seed;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_assemblies: usize,
    pub kits_min: usize,
    pub kits_max: usize,
    pub margin: f64,
    pub seed: u64,
    /// Objects start upside down (grasp side facing the kit floor).
    pub hard: bool,
    /// Fresh draws per assembly when kits or objects cannot be placed.
    pub max_retries: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_assemblies: 10,
            kits_min: 2,
            kits_max: 5,
            margin: 0.0025,
            seed: 0,
            hard: false,
            max_retries: 20,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kits_min < 1 || self.kits_min > self.kits_max || self.kits_max > 5 {
            return Err(Error::InvalidArgument("kits per assembly must satisfy 1 <= min <= max <= 5".into()));
        }
        KitSpec::with_margin(self.margin).validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    /// Source label of each object, by object id.
    pub objects: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    /// "procedural", or the object file names the scenes draw from.
    pub source: Vec<String>,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub fn load(dataset: &Path) -> Result<Manifest> {
        Ok(serde_json::from_str(&fs::read_to_string(dataset.join(MANIFEST))?)?)
    }

    fn save(&self, dataset: &Path) -> Result<()> {
        let tmp = dataset.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        fs::rename(tmp, dataset.join(MANIFEST))?;
        Ok(())
    }

    pub fn scene_dir(&self, dataset: &Path, entry: &SceneEntry) -> PathBuf {
        dataset.join(&entry.id)
    }
}

pub enum ObjectSource {
    /// Random shapes from the built-in families.
    Procedural,
    /// Named, normalized meshes.
    Meshes(Vec<(String, TriMesh)>),
}

impl ObjectSource {
    /// Every `*.obj` in `dir`, sorted by file name and normalized.
    pub fn from_dir(dir: &Path) -> Result<ObjectSource> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::EmptyInput(format!("no .obj meshes in {}", dir.display())));
        }
        let meshes = paths
            .iter()
            .map(|p| {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                Ok((name, normalize_object(&TriMesh::load_obj(p)?)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ObjectSource::Meshes(meshes))
    }

    fn labels(&self) -> Vec<String> {
        match self {
            ObjectSource::Procedural => vec!["procedural".into()],
            ObjectSource::Meshes(m) => m.iter().map(|(n, _)| n.clone()).collect(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (String, TriMesh) {
        match self {
            ObjectSource::Procedural => {
                let (kind, mesh) = random_object(rng);
                (kind.name().to_string(), mesh)
            }
            ObjectSource::Meshes(m) => m[rng.random_range(0..m.len())].clone(),
        }
    }
}

fn scene_id(i: usize) -> String {
    format!("scene_{i:04}")
}

/// Scene `index` of a dataset with configuration `cfg`, retrying with fresh
/// draws when the kits or objects cannot be placed. Returns the scene and
/// the source label of each object.
pub fn make_scene(source: &ObjectSource, cfg: &DatasetConfig, index: usize) -> Result<(Scene, Vec<String>)> {
    let spec = KitSpec::with_margin(cfg.margin);
    let scene_cfg = SceneConfig {
        hard: cfg.hard,
        ..SceneConfig::default()
    };
    let mut last = None;
    for attempt in 0..=cfg.max_retries {
        let seed = derive_seed(cfg.seed, &["assembly", &index.to_string(), &attempt.to_string()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(cfg.kits_min..=cfg.kits_max);
        let (labels, meshes): (Vec<String>, Vec<TriMesh>) = (0..k).map(|_| source.draw(&mut rng)).unzip();
        let result = build_assembly(&meshes, &spec, seed).and_then(|asm| sample_scene(&meshes, asm, &scene_cfg, seed));
        match result {
            Ok(scene) => return Ok((scene, labels)),
            Err(e @ (Error::Placement(_) | Error::WorkspaceFull { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Generate `cfg.n_assemblies` scenes under `out`. Scenes already listed in
/// an existing manifest with the same configuration are kept.
pub fn generate_dataset(source: &ObjectSource, cfg: &DatasetConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut manifest = match Manifest::load(out) {
        Ok(m) => {
            if m.config != *cfg || m.source != source.labels() {
                return Err(Error::InvalidArgument(format!(
                    "{} holds a dataset with a different configuration",
                    out.display()
                )));
            }
            m
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => Manifest {
            config: cfg.clone(),
            source: source.labels(),
            scenes: vec![],
        },
        Err(e) => return Err(e),
    };
    // drop entries whose files went missing; they are regenerated in order
    let complete = manifest
        .scenes
        .iter()
        .take_while(|e| out.join(&e.id).join("scene.json").is_file())
        .count();
    manifest.scenes.truncate(complete.min(cfg.n_assemblies));
    for i in manifest.scenes.len()..cfg.n_assemblies {
        let (scene, labels) = make_scene(source, cfg, i)?;
        let id = scene_id(i);
        scene.save(&out.join(&id))?;
        manifest.scenes.push(SceneEntry { id, objects: labels });
        manifest.save(out)?;
    }
    manifest.save(out)?;
    Ok(manifest)
}
