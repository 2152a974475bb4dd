//! Robot bodies as semialgebraic sets: the closed-form primitives and a
//! hand-written polynomial description.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sos_corridor::geometry::{make_primitive, Primitive, SemialgebraicShape};
use sos_corridor::polynomial::{Monomial, Polynomial};

fn main() -> sos_corridor::Result<()> {
    let shapes = [
        ("box", make_primitive(3, Primitive::Box { half_extents: vec![0.4, 0.25, 0.1] })?),
        ("ellipsoid", make_primitive(3, Primitive::Ellipsoid { semi_axes: vec![0.4, 0.25, 0.15] })?),
        ("cylinder", make_primitive(3, Primitive::Cylinder { radius: 0.2, half_height: 0.3 })?),
        ("cone", make_primitive(3, Primitive::EllipticalCone { a: 0.2, b: 0.1, h: 0.3 })?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, shape) in &shapes {
        let samples = shape.sample_boundary(1000, &mut rng).expect("primitive");
        let worst = samples
            .iter()
            .flat_map(|p| shape.inequalities().iter().map(move |f| f.evaluate(p)))
            .fold(f64::INFINITY, f64::min);
        println!(
            "{name:>9}: {} inequalities, max degree {}, bounding radius {:.3}, min f_j on boundary samples {worst:+.1e}",
            shape.inequalities().len(),
            shape.max_degree(),
            shape.bounding_radius()
        );
    }

    // A disc of radius 0.3 written out by hand: 0.09 - x^2 - y^2 >= 0.
    let disc = Polynomial::from_terms(
        2,
        [(Monomial::one(2), 0.09), (Monomial::new(vec![2, 0]), -1.0), (Monomial::new(vec![0, 2]), -1.0)],
    )?;
    let shape = SemialgebraicShape::new(2, vec![disc], 0.3)?;
    for p in [[0.1, 0.2], [0.25, 0.2]] {
        println!("disc contains {p:?}: {}", shape.contains(&p, 0.0));
    }
    Ok(())
}
