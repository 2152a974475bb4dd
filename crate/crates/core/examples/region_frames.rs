//! Free regions as normalized polytopes with a Chebyshev-center frame.

use nalgebra::{DMatrix, DVector};
use sos_corridor::geometry::{box_region, chebyshev_center, normalize_region};

fn main() -> sos_corridor::Result<()> {
    // A skewed quadrilateral {x : A x <= b}.
    let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, -1.0, 0.2, 0.1, 1.0, -0.4, -1.0]);
    let b = DVector::from_column_slice(&[2.0, 1.0, 1.5, 1.0]);
    let (center, radius) = chebyshev_center(&a, &b)?;
    println!("Chebyshev center {:?}, radius {radius:.4}", center.as_slice());

    let region = normalize_region(&a, &b)?;
    println!("frame origin {:?}", region.origin().as_slice());
    println!("offsets g = {:?}", region.g().as_slice());
    for v in region.vertices() {
        println!("vertex {:?}, point scaling {:.4}", v.as_slice(), region.point_scaling(v.as_slice()));
    }

    let room = box_region(&[0.0, 0.0], &[4.0, 2.0])?;
    let overlap = region.intersection(&room)?;
    println!("overlap with the room: {} facets, inscribed radius {:.4}", overlap.num_facets(), overlap.g().min());
    Ok(())
}
