//! Hand-built five-frame evaluation fixture shared by the evaluation and
//! acceptance tests.
//!
//! Frame contents (E = easy, M = moderate, H = hard ground truth; scores in
//! parentheses):
//!
//! | frame | ground truth              | detections                                         |
//! |-------|---------------------------|----------------------------------------------------|
//! | 0     | E1, M1                    | exact E1 (.95), exact M1 (.60)                     |
//! | 1     | E2, H1                    | exact E2 (.90), exact H1 (.85), background (.80)   |
//! | 2     | E3, DontCare              | on DontCare (.70), E3 +2px (.75), exact E3 (.40)   |
//! | 3     | M2                        | none (no result file)                              |
//! | 4     | E4                        | E4 shifted 40px, IoU 3/7 (.65), Pedestrian (.99)   |
//!
//! Enumerated by hand in score order with R11 sampling:
//!
//! * easy: 4 positives; TP TP FP TP FP FP (M1, H1, DontCare hits ignored).
//!   Envelope 1 up to recall 1/2, 3/4 up to recall 3/4.
//!   AP = (6 * 1 + 2 * 3/4) / 11.
//! * moderate: 6 positives; TP TP FP TP FP TP FP.
//!   Envelope 1 to 1/3, 3/4 to 1/2, 2/3 to 2/3.
//!   AP = (4 * 1 + 2 * 3/4 + 1 * 2/3) / 11.
//! * hard: 7 positives; TP TP TP FP TP FP TP FP.
//!   Envelope 1 to 3/7, 4/5 to 4/7, 5/7 to 5/7.
//!   AP = (5 * 1 + 1 * 4/5 + 2 * 5/7) / 11.

#![allow(dead_code)]

use anchorlab::{Box2D, Detection, Frame, GroundTruthObject};

pub const EXPECTED_EASY: f64 = (6.0 + 2.0 * 0.75) / 11.0;
pub const EXPECTED_MODERATE: f64 = (4.0 + 2.0 * 0.75 + 2.0 / 3.0) / 11.0;
pub const EXPECTED_HARD: f64 = (5.0 + 0.8 + 2.0 * 5.0 / 7.0) / 11.0;

fn gt(class: &str, b: Box2D, occlusion: i32) -> GroundTruthObject {
    GroundTruthObject {
        occlusion,
        ..GroundTruthObject::with_box(class, b)
    }
}

fn det(class: &str, b: Box2D, score: f64) -> Detection {
    Detection::new(GroundTruthObject::with_box(class, b), score)
}

pub fn ground_truth() -> Vec<Frame<GroundTruthObject>> {
    let e1 = Box2D::new(100.0, 100.0, 200.0, 180.0);
    let m1 = Box2D::new(300.0, 100.0, 350.0, 130.0);
    let e2 = Box2D::new(50.0, 50.0, 150.0, 150.0);
    let h1 = Box2D::new(400.0, 100.0, 500.0, 160.0);
    let e3 = Box2D::new(10.0, 10.0, 90.0, 90.0);
    let dc = Box2D::new(600.0, 150.0, 700.0, 250.0);
    let m2 = Box2D::new(200.0, 200.0, 260.0, 230.0);
    let e4 = Box2D::new(500.0, 50.0, 600.0, 130.0);
    vec![
        Frame {
            id: "000000".into(),
            rows: vec![gt("Car", e1, 0), gt("Car", m1, 1)],
        },
        Frame {
            id: "000001".into(),
            rows: vec![gt("Car", e2, 0), gt("Car", h1, 2)],
        },
        Frame {
            id: "000002".into(),
            rows: vec![gt("Car", e3, 0), gt("DontCare", dc, 0)],
        },
        Frame {
            id: "000003".into(),
            rows: vec![gt("Car", m2, 1)],
        },
        Frame {
            id: "000004".into(),
            rows: vec![gt("Car", e4, 0)],
        },
    ]
}

/// Detections; frame 000003 deliberately has no entry.
pub fn detections() -> Vec<Frame<Detection>> {
    let g = ground_truth();
    let b = |f: usize, i: usize| g[f].rows[i].bbox;
    vec![
        Frame {
            id: "000000".into(),
            rows: vec![det("Car", b(0, 0), 0.95), det("Car", b(0, 1), 0.60)],
        },
        Frame {
            id: "000001".into(),
            rows: vec![
                det("Car", b(1, 0), 0.90),
                det("Car", b(1, 1), 0.85),
                det("Car", Box2D::new(700.0, 200.0, 760.0, 260.0), 0.80),
            ],
        },
        Frame {
            id: "000002".into(),
            rows: vec![
                det("Car", b(2, 1), 0.70),
                det("Car", Box2D::new(12.0, 10.0, 92.0, 90.0), 0.75),
                det("Car", b(2, 0), 0.40),
            ],
        },
        Frame {
            id: "000004".into(),
            rows: vec![
                det("Car", Box2D::new(540.0, 50.0, 640.0, 130.0), 0.65),
                det("Pedestrian", b(4, 0), 0.99),
            ],
        },
    ]
}
