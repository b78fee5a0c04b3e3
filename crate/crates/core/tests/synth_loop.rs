use anchorlab::eval::{evaluate_dataset, evaluate_frames, Interpolation};
use anchorlab::synth::{generate_ground_truth, perturb, perturb_frames, write_label_frames, PerturbConfig, ScoreModel};
use anchorlab::{DifficultyBin, Frame, GroundTruthObject, ImageDims};

const FIXTURE_SEED: u64 = 2017;

/// 20 frames x 5 cars.
fn standard_fixture() -> Vec<Frame<GroundTruthObject>> {
    generate_ground_truth(20, 5, ImageDims::KITTI, FIXTURE_SEED)
}

fn moderate_ap(gts: &[Frame<GroundTruthObject>], cfg: &PerturbConfig) -> f64 {
    let dets = perturb_frames(gts, cfg).unwrap();
    evaluate_frames(gts, &dets, "Car", 0.7, Interpolation::R11)
        .unwrap()
        .ap(DifficultyBin::Moderate)
}

#[test]
fn fixture_covers_every_bin() {
    let gts = standard_fixture();
    let report = evaluate_frames(&gts, &[], "Car", 0.7, Interpolation::R11).unwrap();
    let pos: Vec<usize> = report.bins.iter().map(|b| b.gt).collect();
    assert!(pos[0] > 0 && pos[0] < pos[1] && pos[1] < pos[2], "{pos:?}");
}

#[test]
fn zero_noise_through_files_is_perfect() {
    let root = tempfile::tempdir().unwrap();
    let (gt_dir, det_dir) = (root.path().join("gt"), root.path().join("det"));
    write_label_frames(&gt_dir, &standard_fixture()).unwrap();
    assert_eq!(perturb(&gt_dir, &det_dir, &PerturbConfig::default()).unwrap(), 20);
    let report = evaluate_dataset(&det_dir, &gt_dir, "Car", 0.7, Interpolation::R11).unwrap();
    for bin in DifficultyBin::EVALUATED {
        assert_eq!(report.ap(bin), 1.0, "{bin:?}");
    }

    let dropped = PerturbConfig {
        drop_rate: 1.0,
        ..Default::default()
    };
    perturb(&gt_dir, &det_dir, &dropped).unwrap();
    let report = evaluate_dataset(&det_dir, &gt_dir, "Car", 0.7, Interpolation::R11).unwrap();
    for bin in DifficultyBin::EVALUATED {
        assert_eq!(report.ap(bin), 0.0, "{bin:?}");
    }
}

#[test]
fn huge_center_noise_destroys_ap() {
    let gts = standard_fixture();
    let cfg = PerturbConfig {
        center_noise_sigma: 400.0,
        seed: 1,
        ..Default::default()
    };
    let ap = moderate_ap(&gts, &cfg);
    // measured once against this evaluator: 0.0
    assert!(ap < 0.05, "{ap}");
    assert_eq!(ap, 0.0);
}

#[test]
fn noise_grid_is_monotone() {
    let gts = standard_fixture();
    let mut last = f64::INFINITY;
    for sigma in [0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 64.0] {
        let cfg = PerturbConfig {
            center_noise_sigma: sigma,
            scale_noise_sigma: sigma / 100.0,
            false_positive_rate: 1.0,
            seed: 5,
            ..Default::default()
        };
        let ap = moderate_ap(&gts, &cfg);
        assert!(ap <= last + 0.01, "sigma {sigma}: {ap} after {last}");
        last = ap;
    }
}

#[test]
fn random_scores_and_false_positives() {
    let gts = standard_fixture();
    let cfg = PerturbConfig {
        false_positive_rate: 3.0,
        score_model: ScoreModel::Random,
        seed: 9,
        ..Default::default()
    };
    let dets = perturb_frames(&gts, &cfg).unwrap();
    let total: usize = dets.iter().map(|f| f.rows.len()).sum();
    assert!(total > 100);
    assert!(dets.iter().flat_map(|f| &f.rows).all(|d| (0.0..1.0).contains(&d.score)));
}

#[test]
fn identical_bytes_across_runs() {
    let root = tempfile::tempdir().unwrap();
    let gt_dir = root.path().join("gt");
    write_label_frames(&gt_dir, &standard_fixture()).unwrap();
    let cfg = PerturbConfig {
        center_noise_sigma: 3.0,
        scale_noise_sigma: 0.05,
        drop_rate: 0.1,
        false_positive_rate: 2.0,
        seed: 77,
        ..Default::default()
    };
    let read_all = |dir: &std::path::Path| {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let a = root.path().join("a");
    let b = root.path().join("b");
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| perturb(&gt_dir, &a, &cfg).unwrap());
    rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| perturb(&gt_dir, &b, &cfg).unwrap());
    assert_eq!(read_all(&a), read_all(&b));
}
