//! Matrix embeddings of quadratic orders and their torus dynamics on the
//! tree.
//!
//! A primitive form (A, B, C) of discriminant d determines the embedding
//! sending sqrt(d) to M = ((-B, -2C), (2A, B)), the unique matrix with
//! (tau, 1)^t as an eigenvector of eigenvalue sqrt(d) for
//! tau = (-B + sqrt(d)) / (2A). The image of the order acts on the tree of
//! Qp through PGL2, and fixes a pair of boundary points, a vertex, or an
//! edge according to the square class of d in Qp.

use crate::bttree::{
    distance, dist_to_geodesic, vertex_from_matrix, BoundaryPoint, OrientedEdge,
    TreeError, VertexNF,
};
use crate::linalg::{rat_int, Mat2, Rat};
use crate::padic::{Padic, PadicError, SquareClass};
use crate::quadforms::QuadForm;
use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("stabilizer conductor is defined for split and inert tori; the ramified case fixes an edge")]
    RamifiedUnsupported,
}

/// An embedding of the quadratic order of discriminant d, represented by
/// the rational matrix image of sqrt(d).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub d: i128,
    pub p: u64,
    /// Image of sqrt(d); integral when built from a form, rational after
    /// conjugation.
    pub sqrt_image: Mat2,
}

impl Embedding {
    /// psi from a primitive form: sqrt(d) -> ((-B, -2C), (2A, B)).
    pub fn from_form(f: &QuadForm, p: u64) -> Embedding {
        assert!(f.is_primitive(), "embedding requires a primitive form");
        let m = Mat2::from_i64(
            (-f.b) as i64,
            (-2 * f.c) as i64,
            (2 * f.a) as i64,
            f.b as i64,
        );
        Embedding { d: f.discriminant(), p, sqrt_image: m }
    }

    /// Image of x + y sqrt(d) (rational coordinates).
    pub fn image(&self, x: &Rat, y: &Rat) -> Mat2 {
        let xi = Mat2::identity().scale(x);
        xi.add(&self.sqrt_image.scale(y))
    }

    /// Image of the order generator (d + sqrt d)/2.
    pub fn omega_image(&self) -> Mat2 {
        self.image(&Rat::new(BigInt::from(self.d), BigInt::from(2)), &Rat::new(BigInt::from(1), BigInt::from(2)))
    }

    /// Conjugated embedding g psi g^-1.
    pub fn conjugate(&self, g: &Mat2) -> Embedding {
        let ginv = g.inv().expect("conjugator must be invertible");
        Embedding {
            d: self.d,
            p: self.p,
            sqrt_image: g.mul(&self.sqrt_image).mul(&ginv),
        }
    }
}

/// Fixed datum of the torus on the tree: two ends, a vertex, or an edge.
#[derive(Debug, Clone, PartialEq)]
pub enum TorusFixedData {
    Split { x: BoundaryPoint, y: BoundaryPoint },
    Inert { v: VertexNF },
    Ramified { e: OrientedEdge },
}

/// Square class of d in Qp decides the trichotomy.
pub fn torus_type(d: i128, p: u64) -> SquareClass {
    Padic::from_int(p, &BigInt::from(d), 12)
        .square_class()
        .expect("d nonzero")
}

/// The fixed datum of the embedded torus.
///
/// Split: the two eigen-directions on the boundary, ordered with the
/// canonical Hensel branch first. Inert: the class of the lattice spanned
/// by (1,0) and by its image under the maximal order generator. Ramified:
/// the edge between an order-stable lattice and its image under a
/// uniformizer.
pub fn torus_fixed_data(e: &Embedding, prec: u32) -> Result<TorusFixedData, EmbedError> {
    let p = e.p;
    let d = BigInt::from(e.d);
    let dp = Padic::from_int(p, &d, prec);
    match dp.square_class().expect("d nonzero") {
        SquareClass::Square => {
            let r = dp.sqrt()?;
            // Eigen-directions (tau, 1) and (tau', 1) with
            // tau = (-B + r) / (2A) read off the matrix: for column (x, y),
            // M (x, y)^t = r (x, y)^t gives x/y = tau.
            let m = &e.sqrt_image;
            let conv = |q: &Rat| Padic::from_ratio(p, q.numer(), q.denom(), prec).unwrap();
            // tau = (r - m.d) / m.c from the second row (c tau + d = r).
            let c = conv(&m.c);
            let dd = conv(&m.d);
            let tau_plus = r.sub(&dd)?.div(&c)?;
            let tau_minus = r.neg().sub(&dd)?.div(&c)?;
            Ok(TorusFixedData::Split {
                x: BoundaryPoint::from_padic(&tau_plus, prec),
                y: BoundaryPoint::from_padic(&tau_minus, prec),
            })
        }
        SquareClass::UnitNonSquare => Ok(TorusFixedData::Inert { v: inert_fixed_vertex(e)? }),
        SquareClass::Ramified => {
            let (v0, v1) = ramified_fixed_edge(e)?;
            Ok(TorusFixedData::Ramified { e: OrientedEdge::new(v0, v1) })
        }
    }
}

/// Conductor exponent m = v_p(f) of the order Z[(d + sqrt d)/2] at p.
fn p_part_of_conductor(d: i128, p: u64) -> u32 {
    let f = crate::quadforms::conductor(d);
    let mut m = 0u32;
    let mut f = f;
    let p = p as i128;
    while f % p == 0 {
        f /= p;
        m += 1;
    }
    m
}

/// The unique vertex fixed by an inert torus: the class of the lattice
/// generated by (1,0) and by psi(w)(1,0) for w generating the maximal
/// local order.
fn inert_fixed_vertex(e: &Embedding) -> Result<VertexNF, EmbedError> {
    let m = p_part_of_conductor(e.d, e.p);
    // d' = d / p^(2m) has the maximal order Zp[(d' + sqrt d')/2].
    let scale = Rat::new(BigInt::one(), BigInt::from(e.p).pow(m));
    let sqrt_dp = e.sqrt_image.scale(&scale);
    let dp = e.d / (e.p as i128).pow(2 * m);
    let omega = Mat2::identity()
        .scale(&Rat::new(BigInt::from(dp), BigInt::from(2)))
        .add(&sqrt_dp.scale(&Rat::new(BigInt::from(1), BigInt::from(2))));
    // Lattice spanned by (1, 0) and omega (1, 0) = (omega.a, omega.c).
    let g = Mat2::new(rat_int(1), omega.a.clone(), rat_int(0), omega.c.clone());
    Ok(vertex_from_matrix(e.p, &g)?)
}

use num_traits::One;

/// The unique edge fixed (setwise) by a ramified torus: an order-stable
/// lattice and its image under a uniformizer of the local field.
fn ramified_fixed_edge(e: &Embedding) -> Result<(VertexNF, VertexNF), EmbedError> {
    let p = e.p;
    let p128 = p as i128;
    // Write d = p^(2m) d' with v(d') in {0, 1}.
    let mut v = 0u32;
    let mut t = e.d;
    while t % p128 == 0 {
        t /= p128;
        v += 1;
    }
    let m = v / 2;
    let scale = Rat::new(BigInt::one(), BigInt::from(p).pow(m));
    let pi_gen = e.sqrt_image.scale(&scale); // image of sqrt(d') with v(d') in {0,1}
    let d_prime = e.d / p128.pow(2 * m);
    // The maximal order of Qp(sqrt d') is Zp[g] with:
    //   v(d') = 1: g = sqrt(d') (a uniformizer);
    //   v(d') = 0 (p = 2, d' = 3 mod 4): g = sqrt(d'), uniformizer 1 + g.
    let vd = if d_prime % p128 == 0 { 1 } else { 0 };
    let (gen, unif) = if vd == 1 {
        (pi_gen.clone(), pi_gen.clone())
    } else {
        (pi_gen.clone(), Mat2::identity().add(&pi_gen))
    };
    // Order-stable lattice L = Zp(1,0) + Zp g(1,0); edge partner = unif L.
    let l = Mat2::new(rat_int(1), gen.a.clone(), rat_int(0), gen.c.clone());
    let v0 = vertex_from_matrix(p, &l)?;
    let l1 = unif.mul(&l);
    let v1 = vertex_from_matrix(p, &l1)?;
    debug_assert_eq!(distance(&v0, &v1), 1);
    Ok((v0, v1))
}

/// Conductor exponent of the stabilizer of v in the torus: the distance to
/// the fixed datum (to the geodesic in the split case, to the fixed vertex
/// in the inert case).
pub fn stabilizer_conductor(e: &Embedding, v: &VertexNF, prec: u32) -> Result<u32, EmbedError> {
    match torus_fixed_data(e, prec)? {
        TorusFixedData::Split { x, y } => Ok(dist_to_geodesic(v, &x, &y)? as u32),
        TorusFixedData::Inert { v: fixed } => Ok(distance(v, &fixed) as u32),
        TorusFixedData::Ramified { .. } => Err(EmbedError::RamifiedUnsupported),
    }
}

/// Elements x + y (d + sqrt d)/2 of the order, as exact matrices; used by
/// tests to sample torus elements.
pub fn order_element(e: &Embedding, x: i64, y: i64) -> Mat2 {
    let omega = e.omega_image();
    Mat2::identity().scale(&rat_int(x)).add(&omega.scale(&rat_int(y)))
}

/// Optimality of the embedding at a prime l: no integer translate of the
/// order generator is divisible by l in the matrix ring. For the form
/// construction this is primitivity of the form, checked directly.
pub fn optimal_at(e: &Embedding, l: u64) -> bool {
    // (psi(w) - r)/l integral for some r in Z iff l divides all of
    // A, C and the difference of the diagonal entries of psi(w).
    let omega = e.omega_image();
    let l_big = BigInt::from(l);
    let is_div = |q: &Rat| q.denom().is_one() && (q.numer() % &l_big).is_zero();
    let diag_diff = &omega.a - &omega.d;
    !(is_div(&omega.b) && is_div(&omega.c) && is_div(&diag_diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bttree::{act_boundary, act_vertex, ball, neighbors};
    use crate::quadforms::class_group;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_image_squares_to_d() {
        for (f, d) in [
            (QuadForm::new(1, 0, 1), -4),
            (QuadForm::new(1, 1, 1), -3),
            (QuadForm::new(2, 1, 6), -47),
        ] {
            let e = Embedding::from_form(&f, 2);
            assert_eq!(e.d, d);
            let m2 = e.sqrt_image.mul(&e.sqrt_image);
            assert_eq!(m2, Mat2::identity().scale(&rat_int(d as i64)));
        }
        // Explicit matrices for the two classic forms.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 2);
        assert_eq!(e.sqrt_image, Mat2::from_i64(0, -2, 2, 0));
        let e = Embedding::from_form(&QuadForm::new(1, 1, 1), 2);
        assert_eq!(e.sqrt_image, Mat2::from_i64(-1, -2, 2, 1));
    }

    #[test]
    fn eigenvector_identity() {
        // The matrix row (2A, B) applied to (tau, 1) gives sqrt(d): check
        // in Q2 for f = (2, 1, 6), d = -47 (split at 2).
        let f = QuadForm::new(2, 1, 6);
        let e = Embedding::from_form(&f, 2);
        let dp = Padic::from_int(2, &BigInt::from(-47), 24);
        let r = dp.sqrt().unwrap();
        // tau = (-B + r) / 2A.
        let b = Padic::from_i64(2, f.b as i64, 24);
        let two_a = Padic::from_i64(2, 2 * f.a as i64, 24);
        let tau = r.sub(&b).unwrap().div(&two_a).unwrap();
        // Second row of psi(sqrt d) is (2A, B).
        let row_c = Padic::from_ratio(2, e.sqrt_image.c.numer(), e.sqrt_image.c.denom(), 24).unwrap();
        let row_d = Padic::from_ratio(2, e.sqrt_image.d.numer(), e.sqrt_image.d.denom(), 24).unwrap();
        let lhs = row_c.mul(&tau).unwrap().add(&row_d).unwrap();
        assert_eq!(lhs, r);
    }

    #[test]
    fn ring_morphism_on_random_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let f = QuadForm::new(3, 1, 4); // d = -47
        let e = Embedding::from_form(&f, 2);
        let d = e.d;
        for _ in 0..100 {
            let (x1, y1) = (rng.gen_range(-9..9i64), rng.gen_range(-9..9i64));
            let (x2, y2) = (rng.gen_range(-9..9i64), rng.gen_range(-9..9i64));
            let a = order_element(&e, x1, y1);
            let b = order_element(&e, x2, y2);
            // Product in the order: (x1 + y1 w)(x2 + y2 w) with
            // w^2 = d w - (d^2 - d)/4.
            let n4 = (d * d - d) / 4;
            let px = x1 as i128 * x2 as i128 - n4 * (y1 as i128 * y2 as i128);
            let py = x1 as i128 * y2 as i128
                + x2 as i128 * y1 as i128
                + d * (y1 as i128 * y2 as i128);
            let omega = e.omega_image();
            let prod_expect = Mat2::identity()
                .scale(&Rat::new(BigInt::from(px), BigInt::one()))
                .add(&omega.scale(&Rat::new(BigInt::from(py), BigInt::one())));
            assert_eq!(a.mul(&b), prod_expect);
            // Additivity.
            let sum = order_element(&e, x1 + x2, y1 + y2);
            assert_eq!(a.add(&b), sum);
        }
    }

    #[test]
    fn trichotomy_examples() {
        // d = -47 at 2: split.
        let e = Embedding::from_form(&QuadForm::new(2, 1, 6), 2);
        match torus_fixed_data(&e, 32).unwrap() {
            TorusFixedData::Split { x, y } => assert_ne!(x, y),
            other => panic!("expected split, got {:?}", other),
        }
        // d = -4 at 3: inert, vertex fixed by the action.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 3);
        match torus_fixed_data(&e, 32).unwrap() {
            TorusFixedData::Inert { v } => {
                // 1 + i has norm 2 coprime to 3: a torus unit at 3.
                let g = order_element(&e, 1, 1);
                assert_eq!(act_vertex(&g, &v).unwrap(), v);
            }
            other => panic!("expected inert, got {:?}", other),
        }
        // d = -4 at 2: ramified.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 2);
        match torus_fixed_data(&e, 32).unwrap() {
            TorusFixedData::Ramified { e: edge } => {
                assert_eq!(distance(&edge.source, &edge.target), 1);
            }
            other => panic!("expected ramified, got {:?}", other),
        }
    }

    #[test]
    fn inert_fixed_vertex_is_unique_in_ball() {
        // Exhaustive check: in a radius-3 ball, exactly one vertex is fixed
        // by both order generators.
        for (f, p) in [(QuadForm::new(1, 0, 1), 3u64), (QuadForm::new(1, 1, 2), 3)] {
            let e = Embedding::from_form(&f, p);
            let TorusFixedData::Inert { v } = torus_fixed_data(&e, 32).unwrap() else {
                panic!("inert expected")
            };
            let g1 = e.omega_image();
            let fixed: Vec<VertexNF> = ball(&v, 3)
                .into_iter()
                .filter(|w| act_vertex(&g1, w).unwrap() == *w)
                .collect();
            assert_eq!(fixed, vec![v]);
        }
    }

    #[test]
    fn ramified_fixed_edge_unique_in_ball() {
        // d = -4 at 2: the edge stabilized setwise by sqrt(-4) = 2i image;
        // exhaustive in radius 3 around a fixed endpoint.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 2);
        let TorusFixedData::Ramified { e: edge } = torus_fixed_data(&e, 32).unwrap() else {
            panic!("ramified expected")
        };
        let m = &e.sqrt_image;
        let mut fixed_edges = Vec::new();
        for v in ball(&edge.source, 3) {
            for n in neighbors(&v) {
                if distance(&v, &n) != 1 {
                    continue;
                }
                let mv = act_vertex(m, &v).unwrap();
                let mn = act_vertex(m, &n).unwrap();
                let fixes = mv == v && mn == n;
                let swaps = mv == n && mn == v;
                if fixes || swaps {
                    let key = if v < n { (v.clone(), n.clone()) } else { (n.clone(), v.clone()) };
                    if !fixed_edges.contains(&key) {
                        fixed_edges.push(key);
                    }
                }
            }
        }
        assert_eq!(fixed_edges.len(), 1);
        let (a, b) = &fixed_edges[0];
        let ours = if edge.source < edge.target {
            (edge.source.clone(), edge.target.clone())
        } else {
            (edge.target.clone(), edge.source.clone())
        };
        assert_eq!((a.clone(), b.clone()), ours);
    }

    #[test]
    fn split_boundary_points_are_fixed() {
        let e = Embedding::from_form(&QuadForm::new(2, 1, 6), 2);
        let TorusFixedData::Split { x, y } = torus_fixed_data(&e, 32).unwrap() else {
            panic!("split expected")
        };
        // A torus element of norm coprime to everything: 1 + 2w.
        let g = order_element(&e, 1, 2);
        assert_eq!(act_boundary(&g, &x, 28).unwrap(), x);
        assert_eq!(act_boundary(&g, &y, 28).unwrap(), y);
    }

    #[test]
    fn stabilizer_conductor_split_and_inert() {
        // Split: vertices on the fixed geodesic have conductor 0.
        let e = Embedding::from_form(&QuadForm::new(2, 1, 6), 2);
        let TorusFixedData::Split { x, y } = torus_fixed_data(&e, 32).unwrap() else {
            panic!()
        };
        let seg = crate::bttree::geodesic_segment(&x, &y, 0, 2).unwrap();
        for v in &seg.vertices {
            assert_eq!(stabilizer_conductor(&e, v, 32).unwrap(), 0);
        }
        // Inert: neighbors of the fixed vertex have conductor 1.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 3);
        let TorusFixedData::Inert { v } = torus_fixed_data(&e, 32).unwrap() else {
            panic!()
        };
        assert_eq!(stabilizer_conductor(&e, &v, 32).unwrap(), 0);
        for n in neighbors(&v) {
            assert_eq!(stabilizer_conductor(&e, &n, 32).unwrap(), 1);
        }
        // Ramified rejected.
        let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 2);
        assert!(matches!(
            stabilizer_conductor(&e, &VertexNF::base(2), 32),
            Err(EmbedError::RamifiedUnsupported)
        ));
    }

    #[test]
    fn conductor_law_by_unit_sampling() {
        // For n <= 2 and p in {2, 3}: units of the conductor-p^n suborder
        // fix every vertex at distance <= n from the fixed datum; a unit
        // outside the suborder moves some vertex at distance n >= 1.
        for (f, p) in [(QuadForm::new(1, 0, 1), 3u64), (QuadForm::new(1, 1, 2), 5)] {
            let e = Embedding::from_form(&f, p);
            let TorusFixedData::Inert { v } = torus_fixed_data(&e, 32).unwrap() else {
                continue;
            };
            let mut rng = ChaCha8Rng::seed_from_u64(101);
            for n in 0..=2u32 {
                let pn = (p as i64).pow(n);
                // Sphere of radius n.
                let sphere: Vec<VertexNF> = ball(&v, n as i64)
                    .into_iter()
                    .filter(|w| distance(w, &v) == n as i64)
                    .collect();
                assert!(!sphere.is_empty());
                let mut sampled = 0;
                while sampled < 50 {
                    let x = rng.gen_range(-20..20i64);
                    let y = rng.gen_range(-20..20i64);
                    if y == 0 {
                        continue;
                    }
                    // Element x + y p^n w of the conductor-p^n suborder;
                    // require unit norm at p.
                    let g = order_element(&e, x, y * pn);
                    let nrm = g.det();
                    if nrm.is_zero() || crate::linalg::rat_valuation(&nrm, p) != Some(0) {
                        continue;
                    }
                    sampled += 1;
                    for w in &sphere {
                        assert_eq!(act_vertex(&g, w).unwrap(), *w);
                    }
                }
                // A unit with y not divisible by p moves some distance-n
                // vertex when n >= 1.
                if n >= 1 {
                    let mut moved = false;
                    let mut tries = 0;
                    while !moved && tries < 200 {
                        tries += 1;
                        let x = rng.gen_range(-20..20i64);
                        let y = rng.gen_range(-20..20i64);
                        if y.rem_euclid(p as i64) == 0 {
                            continue;
                        }
                        let g = order_element(&e, x, y);
                        let nrm = g.det();
                        if nrm.is_zero() || crate::linalg::rat_valuation(&nrm, p) != Some(0) {
                            continue;
                        }
                        if sphere.iter().any(|w| act_vertex(&g, w).unwrap() != *w) {
                            moved = true;
                        }
                    }
                    assert!(moved, "maximal-order unit should move depth-{} vertices", n);
                }
            }
        }
    }

    #[test]
    fn transitivity_on_spheres_small() {
        // Inert case, p in {2, 3}, n <= 2: the orbit of one distance-n
        // vertex under sampled torus units covers the whole sphere.
        for (f, p) in [(QuadForm::new(1, 1, 2), 3u64), (QuadForm::new(1, 0, 1), 3)] {
            let e = Embedding::from_form(&f, p);
            let TorusFixedData::Inert { v } = torus_fixed_data(&e, 32).unwrap() else {
                continue;
            };
            for n in 1..=2i64 {
                let sphere: std::collections::HashSet<VertexNF> = ball(&v, n)
                    .into_iter()
                    .filter(|w| distance(w, &v) == n)
                    .collect();
                let start = sphere.iter().next().unwrap().clone();
                let mut orbit = std::collections::HashSet::new();
                orbit.insert(start.clone());
                for x in -8..8i64 {
                    for y in -8..8i64 {
                        let g = order_element(&e, x, y);
                        let det = g.det();
                        if det.is_zero() || crate::linalg::rat_valuation(&det, p) != Some(0) {
                            continue;
                        }
                        orbit.insert(act_vertex(&g, &start).unwrap());
                    }
                }
                assert_eq!(orbit, sphere, "p={} n={}", p, n);
            }
        }
    }

    #[test]
    fn conjugation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(131);
        for _ in 0..20 {
            let g = loop {
                let g = Mat2::from_i64(
                    rng.gen_range(-4..5),
                    rng.gen_range(-4..5),
                    rng.gen_range(-4..5),
                    rng.gen_range(-4..5),
                );
                if !g.det().is_zero() {
                    break g;
                }
            };
            // Inert example.
            let e = Embedding::from_form(&QuadForm::new(1, 0, 1), 3);
            let ec = e.conjugate(&g);
            let TorusFixedData::Inert { v } = torus_fixed_data(&e, 32).unwrap() else {
                panic!()
            };
            let TorusFixedData::Inert { v: vc } = torus_fixed_data(&ec, 32).unwrap() else {
                panic!()
            };
            assert_eq!(vc, act_vertex(&g, &v).unwrap());
            // Split example: fixed boundary pair moves by the action.
            let e = Embedding::from_form(&QuadForm::new(2, 1, 6), 2);
            let ec = e.conjugate(&g);
            let TorusFixedData::Split { x, y } = torus_fixed_data(&e, 40).unwrap() else {
                panic!()
            };
            let TorusFixedData::Split { x: xc, y: yc } = torus_fixed_data(&ec, 40).unwrap()
            else {
                panic!()
            };
            let gx = act_boundary(&g, &x, 32).unwrap();
            let gy = act_boundary(&g, &y, 32).unwrap();
            assert!(
                (xc == gx && yc == gy) || (xc == gy && yc == gx),
                "conjugated fixed pair must be the transported pair"
            );
        }
    }

    #[test]
    fn optimality_of_primitive_forms() {
        // psi(K) meets the matrix order exactly in the order of disc d:
        // for every l dividing d (l odd here), no translate is divisible.
        for d in [-47i128, -91, -115] {
            for f in class_group(d).unwrap().reduced_forms {
                let e = Embedding::from_form(&f, 2);
                let mut l = 3u64;
                while (l as i128) * (l as i128) <= -d {
                    if d % (l as i128) == 0 {
                        assert!(optimal_at(&e, l));
                    }
                    l += 2;
                }
            }
        }
        // An imprimitive image: sqrt(-16) sent to 2 * (the sqrt(-4)
        // matrix) generates only the index-2 suborder, failing at l = 2.
        let e2 = Embedding {
            d: -16,
            p: 5,
            sqrt_image: Mat2::from_i64(0, -4, 4, 0),
        };
        assert!(!optimal_at(&e2, 2));
    }
}
