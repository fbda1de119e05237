//! Synthetic dataset generation: random pipe scenes and (sparse, dense)
//! training pairs assembled through the survey → migration → registration
//! pipeline (or its ground-truth shortcut).

use std::path::Path;

use rand::Rng;

use crate::bscan::{synthesize_bscan, BScanConfig};
use crate::cloud::{read_ply, register_cross_sections, resample, write_ply, PointCloud};
use crate::error::{Error, Result};
use crate::kinematics::{plan_grid_survey, ScanDirection, SurveyPlan};
use crate::migration::{backproject, threshold_to_cross_section};
use crate::rng::SeedSplitter;
use crate::scene::{ground_truth_cross_section, ground_truth_dense_cloud, GridSpec, Pipe, PipeScene};

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub scene_count: usize,
    /// Slab extents; pipes are buried inside `[0,x]×[0,y]×[-z,0]`.
    pub extents: [f64; 3],
    pub eps_r: f64,
    /// Grid survey: spacing between scan lines and between traces.
    pub line_spacing: f64,
    pub trace_spacing: f64,
    /// Cross-section cell size for rasterization / migration.
    pub cell_size: f64,
    pub sparse_points: usize,
    pub dense_points: usize,
    pub seed: u64,
    /// Build sparse clouds through the full back-projection pipeline rather
    /// than from rasterized ground-truth cross-sections.
    pub use_bpa: bool,
    /// Binarization threshold for the migrated images.
    pub threshold: f64,
}

impl DatasetConfig {
    pub fn new(scene_count: usize, seed: u64) -> Self {
        DatasetConfig {
            scene_count,
            extents: [2.0, 2.0, 1.0],
            eps_r: 9.0,
            line_spacing: 0.2,
            trace_spacing: 0.02,
            cell_size: 0.02,
            sparse_points: 1500,
            dense_points: 8064,
            seed,
            use_bpa: false,
            threshold: 0.5,
        }
    }
}

/// One generated scene with its training pair.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub scene: PipeScene,
    pub sparse: PointCloud,
    pub dense: PointCloud,
}

const MATERIALS: [&str; 3] = ["metal", "pvc", "concrete"];

/// A random scene of 1–3 pipes running along y (perpendicular to the
/// x-directed scan lines), well inside the slab.
pub fn random_scene<R: Rng>(cfg: &DatasetConfig, rng: &mut R) -> Result<PipeScene> {
    let [ex, ey, ez] = cfg.extents;
    let mut scene = PipeScene::new(cfg.extents, cfg.eps_r)?;
    let count = rng.gen_range(1..=3);
    for _ in 0..count {
        let radius = rng.gen_range(0.03..0.08);
        let x = rng.gen_range(0.15 * ex..0.85 * ex);
        let depth = rng.gen_range(0.25 * ez..0.7 * ez);
        let material = MATERIALS[rng.gen_range(0..MATERIALS.len())].to_string();
        scene.add_pipe(Pipe {
            start: [x, 0.0, -depth],
            end: [x, ey, -depth],
            radius,
            material,
        })?;
    }
    Ok(scene)
}

/// The default grid survey over a scene's slab.
pub fn survey_for(cfg: &DatasetConfig, scene: &PipeScene) -> Result<SurveyPlan> {
    plan_grid_survey(
        scene.extents[0],
        scene.extents[1],
        cfg.line_spacing,
        cfg.trace_spacing,
        ScanDirection::AlongX,
    )
}

fn grid_for(cfg: &DatasetConfig, scene: &PipeScene) -> GridSpec {
    GridSpec::new(
        (scene.extents[2] / cfg.cell_size).round() as usize,
        (scene.extents[0] / cfg.cell_size).round() as usize,
        cfg.cell_size,
    )
}

/// Sparse registered cloud for one scene: one cross-section per survey line,
/// detected by back-projection or rasterized from the ground truth, then
/// registered and resampled to `sparse_points`.
pub fn sparse_cloud(cfg: &DatasetConfig, scene: &PipeScene, seed: u64) -> Result<PointCloud> {
    let plan = survey_for(cfg, scene)?;
    let grid = grid_for(cfg, scene);
    let mut sections = Vec::with_capacity(plan.lines.len());
    for line in &plan.lines {
        let pose = [line.start[0], line.start[1], 0.0];
        let cs = if cfg.use_bpa {
            let bcfg = BScanConfig::for_scene(scene)?;
            let bscan = synthesize_bscan(scene, line, &bcfg)?;
            let image = backproject(&bscan, grid, scene.eps_r)?;
            threshold_to_cross_section(&image, cfg.threshold)?
        } else {
            ground_truth_cross_section(scene, pose, grid)
        };
        if cs.occupied_count() > 0 {
            sections.push(cs);
        }
    }
    if sections.is_empty() {
        return Err(Error::invalid("no detections in any survey line"));
    }
    let cloud = register_cross_sections(&sections)?;
    resample(&cloud, cfg.sparse_points, seed)
}

/// Generate `scene_count` samples, all randomness derived from `cfg.seed`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<SceneSample>> {
    if cfg.scene_count == 0 {
        return Err(Error::invalid("scene count must be positive"));
    }
    let splitter = SeedSplitter::new(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.scene_count);
    for i in 0..cfg.scene_count {
        let i = i as u64;
        let mut rng = splitter.rng(3 * i);
        let scene = random_scene(cfg, &mut rng)?;
        let sparse = sparse_cloud(cfg, &scene, splitter.derive(3 * i + 1))?;
        let dense = ground_truth_dense_cloud(&scene, cfg.dense_points, splitter.derive(3 * i + 2))?;
        samples.push(SceneSample {
            scene,
            sparse,
            dense,
        });
    }
    Ok(samples)
}

/// Write samples as `scene_NNN.txt` / `sparse_NNN.ply` / `dense_NNN.ply`.
pub fn save_dataset(samples: &[SceneSample], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        s.scene.save(&dir.join(format!("scene_{i:03}.txt")))?;
        write_ply(&s.sparse, &dir.join(format!("sparse_{i:03}.ply")))?;
        write_ply(&s.dense, &dir.join(format!("dense_{i:03}.ply")))?;
    }
    Ok(())
}

/// Load every `scene_NNN` triple present in a directory, in index order.
pub fn load_dataset(dir: &Path) -> Result<Vec<SceneSample>> {
    let mut samples = Vec::new();
    for i in 0.. {
        let scene_path = dir.join(format!("scene_{i:03}.txt"));
        if !scene_path.exists() {
            break;
        }
        samples.push(SceneSample {
            scene: PipeScene::load(&scene_path)?,
            sparse: read_ply(&dir.join(format!("sparse_{i:03}.ply")))?,
            dense: read_ply(&dir.join(format!("dense_{i:03}.ply")))?,
        });
    }
    if samples.is_empty() {
        return Err(Error::invalid(format!(
            "no dataset samples found in {}",
            dir.display()
        )));
    }
    Ok(samples)
}
