//! Points, planes and rigid motions in PGA.

use nalgebra::{Matrix3, Rotation3, Vector3};
use pga_grasp::ga::{embed_point, extract_point, Multivector, Versor, BLADE_NAMES};

fn show(name: &str, m: &Multivector) {
    let terms: Vec<String> = m
        .coeffs()
        .iter()
        .zip(BLADE_NAMES)
        .filter(|(c, _)| c.abs() > 1e-12)
        .map(|(c, b)| format!("{c:+.3} {b}"))
        .collect();
    println!("{name:>8} = {}", terms.join(" "));
}

fn main() -> anyhow::Result<()> {
    let a = Vector3::new(1.0, 0.0, 0.0);
    let b = Vector3::new(0.0, 1.0, 0.0);
    let c = Vector3::new(0.0, 0.0, 1.0);
    let (pa, pb, pc) = (embed_point(&a), embed_point(&b), embed_point(&c));
    show("A", &pa);

    // Join two points into a line, a third into a plane.
    let line = pa.join(&pb);
    let plane = line.join(&pc);
    show("A v B", &line);
    show("A v B v C", &plane);
    // The centroid lies on the plane.
    let centroid = embed_point(&((a + b + c) / 3.0));
    println!("plane ^ centroid residual {:.1e}", plane.wedge(&centroid).max_abs());

    let rot = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).matrix();
    let motor = Versor::motor(&rot, &Vector3::new(0.0, 0.0, 0.5));
    let moved = motor.apply(&pa);
    println!("motor(A) = {:?} (matrix: {:?})", extract_point(&moved)?, rot * a + Vector3::new(0.0, 0.0, 0.5));

    // Motors compose like matrices.
    let twice = motor.compose(&motor)?;
    println!("motor∘motor linear part = {:?}", twice.linear_part());
    println!("expected                = {:?}", rot * rot);

    let mirror = Versor::reflection(&Vector3::new(1.0, 0.0, 0.0), 0.0)?;
    println!("mirror(A) = {:?}, parity {:?}", mirror.apply_point(&a), mirror.parity());
    assert!((mirror.linear_part() - Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0))).norm() < 1e-12);
    Ok(())
}
