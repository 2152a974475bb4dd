//! Graded-lex monomial bases and the Gram-matrix bookkeeping behind SOS
//! constraints.

use sos_corridor::polynomial::{GramIndexMap, Monomial, MonomialBasis, Polynomial};

fn main() -> sos_corridor::Result<()> {
    let half = MonomialBasis::new(2, 1)?;
    let full = MonomialBasis::new(2, 2)?;
    println!("[x]_1 = {:?}", half.monomials().iter().map(|m| m.to_string()).collect::<Vec<_>>());
    println!("[x]_2 = {:?}", full.monomials().iter().map(|m| m.to_string()).collect::<Vec<_>>());

    // sigma(x) = [x]^T X [x] for a PSD X is a sum of squares.
    let gram = [2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 1.0];
    let map = GramIndexMap::new(&half);
    let sigma = map.polynomial_of(&gram);
    println!("sigma = {sigma}");
    for (l, m) in full.monomials().iter().enumerate() {
        println!("  coefficient of {m:>6} collects Gram entries {:?}", map.entries(l));
    }

    let x2 = Polynomial::from_terms(2, [(Monomial::new(vec![2, 0]), 1.0)])?;
    let p = sigma.sub(&x2);
    println!("sigma - x^2 = {p}, degree {}, value at (1, -1) = {}", p.degree(), p.evaluate(&[1.0, -1.0]));
    Ok(())
}
