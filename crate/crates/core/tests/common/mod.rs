#![allow(dead_code)]

use std::f64::consts::PI;

use anisomt::{Domain, FinslerNorm};

/// The three norms used across shape checks.
pub fn norms() -> Vec<(&'static str, FinslerNorm)> {
    vec![
        ("euclidean", FinslerNorm::euclidean(2).unwrap()),
        ("p1.5", FinslerNorm::p_norm(1.5, &[1.0, 1.0]).unwrap()),
        ("diag41", FinslerNorm::quadratic(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap()),
    ]
}

fn regular(k: usize, r: f64, phase: f64) -> Domain {
    let vertices = (0..k)
        .map(|i| {
            let a = phase + 2.0 * PI * i as f64 / k as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    Domain::Polygon { vertices }
}

fn star(points: usize, outer: f64, inner: f64) -> Domain {
    let vertices = (0..2 * points)
        .map(|i| {
            let a = PI / 2.0 + PI * i as f64 / points as f64;
            let r = if i % 2 == 0 { outer } else { inner };
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    Domain::Polygon { vertices }
}

fn poly(v: &[[f64; 2]]) -> Domain {
    Domain::Polygon { vertices: v.to_vec() }
}

fn wulff(norm: FinslerNorm, r: f64) -> Domain {
    Domain::wulff(&norm, r)
}

/// Twenty planar shapes of unit size, counter-clockwise where polygonal.
pub fn shape_corpus() -> Vec<(&'static str, Domain)> {
    vec![
        ("square", poly(&[[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])),
        ("rectangle", poly(&[[-1.0, -0.25], [1.0, -0.25], [1.0, 0.25], [-1.0, 0.25]])),
        ("equilateral", regular(3, 0.8, PI / 2.0)),
        ("right_triangle", poly(&[[-0.6, -0.5], [0.7, -0.5], [-0.6, 0.6]])),
        ("pentagon", regular(5, 0.7, 0.3)),
        ("hexagon", regular(6, 0.7, 0.0)),
        ("octagon", regular(8, 0.7, 0.2)),
        ("l_shape", poly(&[[-0.6, -0.6], [0.6, -0.6], [0.6, 0.0], [0.0, 0.0], [0.0, 0.6], [-0.6, 0.6]])),
        ("star", star(5, 0.8, 0.35)),
        ("trapezoid", poly(&[[-0.8, -0.4], [0.8, -0.4], [0.4, 0.4], [-0.4, 0.4]])),
        ("parallelogram", poly(&[[-0.8, -0.4], [0.4, -0.4], [0.8, 0.4], [-0.4, 0.4]])),
        ("chevron", poly(&[[-0.7, -0.6], [0.0, -0.1], [0.7, -0.6], [0.7, 0.0], [0.0, 0.5], [-0.7, 0.0]])),
        ("disk", Domain::disk(0.8)),
        ("slab", Domain::Box { lo: vec![-0.9, -0.3], hi: vec![0.9, 0.3] }),
        ("ellipse", wulff(FinslerNorm::quadratic(&[vec![1.0, 0.0], vec![0.0, 6.0]]).unwrap(), 0.9)),
        ("tilted_ellipse", wulff(FinslerNorm::quadratic(&[vec![2.0, 1.2], vec![1.2, 2.0]]).unwrap(), 0.8)),
        ("wulff_p1.5", wulff(FinslerNorm::p_norm(1.5, &[1.0, 1.0]).unwrap(), 0.7)),
        ("wulff_p3", wulff(FinslerNorm::p_norm(3.0, &[1.0, 2.0]).unwrap(), 0.7)),
        ("wulff_l1", wulff(FinslerNorm::p_norm(1.0, &[1.0, 1.0]).unwrap(), 0.6)),
        ("wulff_diag41", wulff(FinslerNorm::quadratic(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap(), 0.5)),
    ]
}

/// Which of [`norms`] a corpus shape is the Wulff ball of.
pub fn wulff_of(shape: &str) -> Option<&'static str> {
    match shape {
        "disk" => Some("euclidean"),
        "wulff_p1.5" => Some("p1.5"),
        "wulff_diag41" => Some("diag41"),
        _ => None,
    }
}
