//! Scene-set generation and loading for the denoising benchmark.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::specklesim::{apply_speckle, gen_clean, SceneSpec};
use crate::spectral::FeatureMap;

use super::config::DataSpec;
use super::tensor_file::TensorFile;

pub const MANIFEST_NAME: &str = "manifest.txt";

/// Writes `clean_%04d` / `noisy_%04d` tensor pairs plus a manifest whose
/// first line echoes the generation settings; scene `i` uses `seed + i`.
/// Returns the written (clean, noisy) path pairs.
pub fn generate_scene_set(spec: &DataSpec, out_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    spec.scene.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut pairs = Vec::with_capacity(spec.count);
    let mut manifest = format!(
        "# scene-set count={} C={} H={} W={} looks={} seed={}\n",
        spec.count, spec.scene.c, spec.scene.h, spec.scene.w, spec.scene.looks, spec.scene.seed
    );
    for i in 0..spec.count {
        let scene = SceneSpec {
            seed: spec.scene.seed.wrapping_add(i as u64),
            ..spec.scene.clone()
        };
        let clean = gen_clean::<f32>(&scene)?;
        let noisy = apply_speckle(&clean, scene.looks, scene.seed)?;
        let clean_name = format!("clean_{i:04}");
        let noisy_name = format!("noisy_{i:04}");
        let clean_path = out_dir.join(&clean_name);
        let noisy_path = out_dir.join(&noisy_name);
        TensorFile::from_feature_map(&clean).write(&clean_path)?;
        TensorFile::from_feature_map(&noisy).write(&noisy_path)?;
        manifest.push_str(&clean_name);
        manifest.push('\n');
        manifest.push_str(&noisy_name);
        manifest.push('\n');
        pairs.push((clean_path, noisy_path));
    }
    super::write_atomic(&out_dir.join(MANIFEST_NAME), manifest.as_bytes())?;
    Ok(pairs)
}

/// Loads (noisy, clean) pairs listed by a directory's manifest.
pub fn load_scene_pairs<S: Scalar>(dir: &Path) -> Result<Vec<(FeatureMap<S>, FeatureMap<S>)>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path)?;
    let names: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if names.is_empty() || names.len() % 2 != 0 {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            message: format!("expected clean/noisy line pairs, found {} entries", names.len()),
        });
    }
    let mut pairs = Vec::with_capacity(names.len() / 2);
    for chunk in names.chunks_exact(2) {
        let clean = TensorFile::read(&dir.join(chunk[0]))?.to_feature_map::<S>()?;
        let noisy = TensorFile::read(&dir.join(chunk[1]))?.to_feature_map::<S>()?;
        pairs.push((noisy, clean));
    }
    Ok(pairs)
}

/// CSV loss history: a `step,loss` header then one row per entry.
pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (step, loss) in history.iter().enumerate() {
        text.push_str(&format!("{step},{loss}\n"));
    }
    super::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_data_spec;

    const SPEC: &str = "H=8\nW=8\nC=2\nn_targets=1\ntarget_size=2\namplitude=3.0\nbackground=1.0\nlooks=1\nseed=5\ncount=3\n";

    #[test]
    fn scene_set_round_trips_and_is_deterministic() {
        let spec = parse_data_spec(SPEC).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_scene_set(&spec, dir_a.path()).unwrap();
        generate_scene_set(&spec, dir_b.path()).unwrap();
        for name in ["clean_0000", "noisy_0002", MANIFEST_NAME] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let pairs = load_scene_pairs::<f32>(dir_a.path()).unwrap();
        assert_eq!(pairs.len(), 3);
        let (noisy, clean) = &pairs[0];
        assert_eq!(clean.data().dim(), (2, 8, 8));
        assert_ne!(noisy.data(), clean.data());
    }

    #[test]
    fn manifest_has_header_plus_two_lines_per_scene() {
        let spec = parse_data_spec(SPEC).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_scene_set(&spec, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(text.lines().count(), 2 * spec.count + 1);
        assert!(text.starts_with("# scene-set count=3"));
    }

    #[test]
    fn scenes_differ_from_each_other() {
        let spec = parse_data_spec(SPEC).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_scene_set(&spec, dir.path()).unwrap();
        let a = std::fs::read(dir.path().join("clean_0000")).unwrap();
        let b = std::fs::read(dir.path().join("clean_0001")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn loss_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&path, &[1.5, 0.75]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,loss\n0,1.5\n1,0.75\n");
    }
}
