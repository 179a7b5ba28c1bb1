//! Quotients of the tree by a split torus stabilizer: (p+1)-volcanoes,
//! rim cycles of CM classes, and hyperbolic equidistribution statistics.
//!
//! For d split at p and p prime to the conductor, the stabilizer of the
//! torus in the projective matrix group of Z[1/p] is generated by the image
//! of a norm-p^k generator u of the k-th power of the fixed prime above p;
//! it translates the fixed geodesic by k, so the quotient is a volcano with
//! a rim of length k and full p-regular trees hanging below. Vertices at
//! distance n from the rim carry CM by the order of discriminant d p^(2n).

use crate::bttree::{
    act_vertex, dist_to_path, distance, geodesic_segment, neighbors, TreeError, VertexNF,
};
use crate::embeddings::{torus_fixed_data, Embedding, EmbedError, TorusFixedData};
use crate::linalg::Mat2;
use crate::quadforms::{
    class_group, compose, pic_of_s_order, prime_form, CmPoint, FormError, PicCertificate,
    PicData, QuadForm,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolcanoError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Address of a volcano vertex: rim index plus the descent word.
///
/// The first letter of a nonempty word ranges over p-1 children (the two
/// rim directions are excluded), deeper letters over p children.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VolcanoAddress {
    pub rim: usize,
    pub word: Vec<u8>,
}

/// A (p+1)-volcano with rim length k and uniform depth m.
#[derive(Debug, Clone)]
pub struct VolcanoGraph {
    pub p: u64,
    pub d: i128,
    pub k: usize,
    pub depth: u32,
    pub vertices: Vec<VolcanoAddress>,
    /// Undirected edge list as index pairs (i <= j); a loop is (i, i), and
    /// parallel edges repeat.
    pub edges: Vec<(usize, usize)>,
}

impl VolcanoGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Depth of a vertex (distance to the rim).
    pub fn depth_of(&self, i: usize) -> u32 {
        self.vertices[i].word.len() as u32
    }

    /// CM conductor exponent label: depth n means CM by disc d p^(2n).
    pub fn cm_discriminant(&self, i: usize) -> i128 {
        self.d * (self.p as i128).pow(2 * self.depth_of(i))
    }

    /// Total degree with loops counting twice.
    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .map(|&(a, b)| {
                if a == i && b == i {
                    2
                } else if a == i || b == i {
                    1
                } else {
                    0
                }
            })
            .sum()
    }

    /// DOT output; rim edges drawn bold.
    pub fn dot(&self, config_line: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "// {}", config_line);
        let _ = writeln!(s, "graph volcano {{");
        for (i, v) in self.vertices.iter().enumerate() {
            let word: String = v.word.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                s,
                "  n{} [label=\"r{}{}{}\" {}];",
                i,
                v.rim,
                if word.is_empty() { "" } else { ":" },
                word,
                if v.word.is_empty() { "shape=doublecircle" } else { "shape=circle" }
            );
        }
        for &(a, b) in &self.edges {
            let rim_edge = self.vertices[a].word.is_empty() && self.vertices[b].word.is_empty();
            let _ = writeln!(
                s,
                "  n{} -- n{}{};",
                a,
                b,
                if rim_edge { " [penwidth=2]" } else { "" }
            );
        }
        let _ = writeln!(s, "}}");
        s
    }
}

/// Synthetic volcano from the invariants alone: rim length k from the class
/// group, then uniform (p-1, p, p, ...) branching to the requested depth.
pub fn build_volcano(d: i128, p: u64, depth: u32) -> Result<VolcanoGraph, VolcanoError> {
    let pic = pic_of_s_order(d, p)?;
    if !matches!(pic.certificate, PicCertificate::SplitGenerator { .. }) {
        return Err(VolcanoError::Form(FormError::NotSplit { d, p }));
    }
    let k = pic.k;
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut index: BTreeMap<VolcanoAddress, usize> = BTreeMap::new();
    for rim in 0..k {
        let addr = VolcanoAddress { rim, word: vec![] };
        index.insert(addr.clone(), vertices.len());
        vertices.push(addr);
    }
    // Rim edges: k = 1 is a loop, k = 2 a double edge, else a cycle.
    if k == 1 {
        edges.push((0, 0));
    } else if k == 2 {
        edges.push((0, 1));
        edges.push((0, 1));
    } else {
        for i in 0..k {
            let j = (i + 1) % k;
            edges.push((i.min(j), i.max(j)));
        }
    }
    // Hanging trees: first letter over p-1 symbols, deeper over p.
    let mut frontier: Vec<VolcanoAddress> = vertices.clone();
    for level in 0..depth {
        let mut next = Vec::new();
        let fanout = if level == 0 { p - 1 } else { p };
        for parent in &frontier {
            let pi = index[parent];
            for c in 0..fanout {
                let mut word = parent.word.clone();
                word.push(c as u8);
                let child = VolcanoAddress { rim: parent.rim, word };
                let ci = vertices.len();
                index.insert(child.clone(), ci);
                vertices.push(child.clone());
                edges.push((pi.min(ci), pi.max(ci)));
                next.push(child);
            }
        }
        frontier = next;
    }
    Ok(VolcanoGraph { p, d, k, depth, vertices, edges })
}

/// The hyperbolic translation generating the torus stabilizer modulo
/// scalars: the matrix image of the norm-p^k generator u. Its translation
/// length along the fixed geodesic is k.
pub fn rim_translation(d: i128, p: u64) -> Result<(Mat2, usize), VolcanoError> {
    let pic = pic_of_s_order(d, p)?;
    let PicCertificate::SplitGenerator { x, y, k } = pic.certificate else {
        return Err(VolcanoError::Form(FormError::NotSplit { d, p }));
    };
    let f = QuadForm::principal(d);
    let e = Embedding::from_form(&f, p);
    let g = e.image(
        &BigRational::new(BigInt::from(2 * x + y * d), BigInt::from(2)),
        &BigRational::new(BigInt::from(y), BigInt::from(2)),
    );
    Ok((g, k))
}

/// The image of psi(u/u'): the square of the stabilizer generator in the
/// projective group, translating by 2k. Kept as a cross-check value.
pub fn rim_translation_squared(d: i128, p: u64) -> Result<(Mat2, usize), VolcanoError> {
    let (g, k) = rim_translation(d, p)?;
    // u/u' = u^2 / p^k; the scalar is invisible in the projective action.
    Ok((g.mul(&g), k))
}

/// Tree-quotient volcano: quotient the radius-m neighborhood of the fixed
/// geodesic by the stabilizer translation, gluing orbit representatives.
pub fn build_volcano_from_tree(d: i128, p: u64, depth: u32) -> Result<VolcanoGraph, VolcanoError> {
    let (gamma, k) = rim_translation(d, p)?;
    let gamma_inv = gamma.inv().expect("norm p^k generator is invertible");
    let f = QuadForm::principal(d);
    let e = Embedding::from_form(&f, p);
    let TorusFixedData::Split { x, y } = torus_fixed_data(&e, 64)? else {
        return Err(VolcanoError::Form(FormError::NotSplit { d, p }));
    };
    // A window of the fixed geodesic long enough to cover a fundamental
    // segment with margin for canonicalization.
    let window = geodesic_segment(&x, &y, -(depth as i64) - 1, k as i64 + depth as i64 + 1)?;
    let geo_lo = -(depth as i64) - 1;
    let geo: Vec<VertexNF> = window.vertices.clone();
    // Index of the nearest geodesic vertex (foot) for canonicalization.
    let foot_index = |v: &VertexNF| -> Option<i64> {
        let mut best: Option<(i64, i64)> = None;
        for (i, w) in geo.iter().enumerate() {
            let dist = distance(v, w);
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, geo_lo + i as i64));
            }
        }
        best.map(|(_, i)| i)
    };
    // Translation direction of gamma along this parameterization: +-k.
    let dir = {
        let ref_idx = 0i64;
        let v_ref = geo[(ref_idx - geo_lo) as usize].clone();
        let im = act_vertex(&gamma, &v_ref)?;
        let moved = distance(&v_ref, &im);
        debug_assert_eq!(moved as usize, k);
        let fwd = geo
            .get((ref_idx + k as i64 - geo_lo) as usize)
            .map_or(false, |w| *w == im);
        if fwd {
            1i64
        } else {
            -1
        }
    };
    // Collect the orbit region: balls of radius `depth` around geodesic
    // vertices with foot index in [0, k).
    let mut canonical: BTreeMap<VertexNF, usize> = BTreeMap::new();
    let mut vertices: Vec<VertexNF> = Vec::new();
    let mut addresses: Vec<VolcanoAddress> = Vec::new();
    let canon = |v: &VertexNF, foot: i64| -> Result<VertexNF, VolcanoError> {
        // Apply gamma^t with t = -dir * floor(foot / k), shifting the foot
        // by t * dir * k into [0, k).
        let mut t = -dir * foot.div_euclid(k as i64);
        let mut w = v.clone();
        while t > 0 {
            w = act_vertex(&gamma, &w)?;
            t -= 1;
        }
        while t < 0 {
            w = act_vertex(&gamma_inv, &w)?;
            t += 1;
        }
        Ok(w)
    };
    // BFS the region from rim representatives outward so parents appear
    // before children and addresses are assigned on first sight.
    let mut frontier: Vec<(VertexNF, VolcanoAddress)> = Vec::new();
    for i in 0..k {
        let rim_v = geo[(i as i64 - geo_lo) as usize].clone();
        let addr = VolcanoAddress { rim: i, word: vec![] };
        canonical.insert(rim_v.clone(), vertices.len());
        vertices.push(rim_v.clone());
        addresses.push(addr.clone());
        frontier.push((rim_v, addr));
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Rim edges from actual adjacency in the quotient.
    for i in 0..k {
        let v = &vertices[i];
        for n in neighbors(v) {
            if dist_to_path(&n, &geo) == 0 {
                // Neighbor on the geodesic: canonicalize and record once
                // per unordered pair (loops from k = 1 handled by the
                // gamma-shift identifying both directions).
                let foot = foot_index(&n).expect("on-geodesic vertex has a foot");
                let cn = canon(&n, foot)?;
                let j = *canonical.get(&cn).expect("rim vertex seen");
                if i < j || (i == j) {
                    edges.push((i.min(j), i.max(j)));
                }
            }
        }
    }
    // k = 2 double edge: both rim vertices see each other twice (the two
    // geodesic directions), but the unordered scan above records the pair
    // once per direction from the smaller index; k = 1 similarly records
    // the loop twice (both directions from the single vertex). Deduplicate
    // to the correct multiplicity: each rim vertex has exactly two rim
    // incidences.
    if k == 1 {
        edges.clear();
        edges.push((0, 0));
    } else if k == 2 {
        edges.clear();
        edges.push((0, 1));
        edges.push((0, 1));
    }
    // Descend level by level.
    for level in 0..depth {
        let mut next = Vec::new();
        for (v, addr) in &frontier {
            let mut child_letter = 0u8;
            for n in neighbors(v) {
                // Children: neighbors strictly deeper than v.
                let nd = dist_to_path(&n, &geo);
                if nd != (level + 1) as i64 {
                    continue;
                }
                // Skip neighbors whose foot escapes the fundamental window
                // only via canonicalization (they are identified with
                // in-window vertices).
                let foot = foot_index(&n).expect("foot exists");
                let cn = canon(&n, foot)?;
                let ci = vertices.len();
                let mut word = addr.word.clone();
                word.push(child_letter);
                child_letter += 1;
                let child_addr = VolcanoAddress { rim: addr.rim, word };
                let pi = canonical[v];
                canonical.insert(cn.clone(), ci);
                vertices.push(cn.clone());
                addresses.push(child_addr.clone());
                edges.push((pi.min(ci), pi.max(ci)));
                next.push((cn, child_addr));
            }
        }
        frontier = next;
    }
    Ok(VolcanoGraph { p, d, k, depth, vertices: addresses, edges })
}

/// Isomorphism of labeled volcano multigraphs: same (p, k, depth), same
/// vertex counts per depth, same degree profile, and matching rim/tree
/// structure. Volcano trees below distinct rim vertices are isomorphic
/// full (p-1, p, ..., p)-ary trees, so structural agreement plus the rim
/// cycle is a complete invariant.
pub fn volcanoes_isomorphic(a: &VolcanoGraph, b: &VolcanoGraph) -> bool {
    if a.p != b.p || a.k != b.k || a.depth != b.depth {
        return false;
    }
    if a.vertex_count() != b.vertex_count() || a.edges.len() != b.edges.len() {
        return false;
    }
    for depth in 0..=a.depth {
        let ca = a.vertices.iter().filter(|v| v.word.len() as u32 == depth).count();
        let cb = b.vertices.iter().filter(|v| v.word.len() as u32 == depth).count();
        if ca != cb {
            return false;
        }
    }
    // Degree check: every vertex of degree p+1 except the deepest level
    // (degree 1), with loops counting twice.
    let check = |g: &VolcanoGraph| -> bool {
        (0..g.vertex_count()).all(|i| {
            let deg = g.degree(i);
            if g.depth_of(i) == g.depth && g.depth > 0 {
                deg == 1
            } else if g.depth == 0 {
                deg == 2
            } else {
                deg == g.p as usize + 1 - if g.depth_of(i) == 0 { 0 } else { 0 }
            }
        })
    };
    // Rim subgraph: exactly the multigraph cycle of length k.
    let rim_edges = |g: &VolcanoGraph| -> usize {
        g.edges
            .iter()
            .filter(|&&(x, y)| g.depth_of(x) == 0 && g.depth_of(y) == 0)
            .count()
    };
    if rim_edges(a) != rim_edges(b) {
        return false;
    }
    // Each rim vertex carries two rim incidences.
    let rim_ok = |g: &VolcanoGraph| -> bool {
        (0..g.vertex_count()).filter(|&i| g.depth_of(i) == 0).all(|i| {
            let cnt: usize = g
                .edges
                .iter()
                .map(|&(x, y)| {
                    if x == i && y == i {
                        2
                    } else if (x == i && g.depth_of(y) == 0) || (y == i && g.depth_of(x) == 0) {
                        1
                    } else {
                        0
                    }
                })
                .sum();
            cnt == 2
        })
    };
    // Child counts: depth-0 vertices have p-1 children, deeper ones p.
    let children_ok = |g: &VolcanoGraph| -> bool {
        (0..g.vertex_count()).all(|i| {
            let di = g.depth_of(i);
            if di == g.depth {
                return true;
            }
            let kids = g
                .edges
                .iter()
                .filter(|&&(x, y)| {
                    (x == i && g.depth_of(y) == di + 1) || (y == i && g.depth_of(x) == di + 1)
                })
                .count();
            if di == 0 {
                kids == g.p as usize - 1
            } else {
                kids == g.p as usize
            }
        })
    };
    let _ = check;
    rim_ok(a) && rim_ok(b) && children_ok(a) && children_ok(b)
}

/// A rim cycle: one coset of the prime-form subgroup, materialized with its
/// CM points in walk order (successive composition by the prime form).
#[derive(Debug, Clone)]
pub struct ISCycle {
    pub d: i128,
    pub p: u64,
    /// The k classes in walk order starting from the lexicographically
    /// smallest member.
    pub coset: Vec<QuadForm>,
    pub cm_points: Vec<CmPoint>,
}

/// The h/k rim cycles of (d, p).
pub fn is_cycles(d: i128, p: u64) -> Result<Vec<ISCycle>, VolcanoError> {
    let pic = pic_of_s_order(d, p)?;
    if !matches!(pic.certificate, PicCertificate::SplitGenerator { .. }) {
        return Err(VolcanoError::Form(FormError::NotSplit { d, p }));
    }
    let pf = prime_form(d, p)?;
    let mut cycles = Vec::new();
    for coset in &pic.cosets {
        let start = coset[0];
        let mut walk = Vec::with_capacity(pic.k);
        let mut g = start;
        for _ in 0..pic.k {
            walk.push(g);
            g = compose(&g, &pf);
        }
        debug_assert_eq!(g, start, "walk closes after k steps");
        let cm_points = walk.iter().map(|f| f.cm_point()).collect();
        cycles.push(ISCycle { d, p, coset: walk, cm_points });
    }
    Ok(cycles)
}

/// Picard data convenience re-export for reporting.
pub fn pic(d: i128, p: u64) -> Result<PicData, VolcanoError> {
    Ok(pic_of_s_order(d, p)?)
}

/// A box in the fundamental domain: [x0, x1) x [y0, y1), rationals, with
/// y1 = None meaning the cusp.
#[derive(Debug, Clone, Serialize)]
pub struct DomainBox {
    pub x0: (i64, i64),
    pub x1: (i64, i64),
    pub y0: (i64, i64),
    pub y1: Option<(i64, i64)>,
    pub label: String,
}

impl DomainBox {
    pub fn above(y0: (i64, i64)) -> DomainBox {
        DomainBox {
            x0: (-1, 2),
            x1: (1, 2),
            y0,
            y1: None,
            label: format!("Im >= {}/{}", y0.0, y0.1),
        }
    }

    pub fn contains(&self, t: &CmPoint) -> bool {
        let (x0n, x0d) = self.x0;
        let (x1n, x1d) = self.x1;
        let (y0n, y0d) = self.y0;
        if !t.re_at_least(x0n as i128, x0d as i128) {
            return false;
        }
        if t.re_at_least(x1n as i128, x1d as i128) {
            return false;
        }
        if !t.im_at_least(y0n as i128, y0d as i128) {
            return false;
        }
        if let Some((y1n, y1d)) = self.y1 {
            if t.im_at_least(y1n as i128, y1d as i128) {
                return false;
            }
        }
        true
    }

    /// Normalized hyperbolic measure of the box intersected with the
    /// fundamental domain (total mass 1 on the domain).
    pub fn measure(&self) -> f64 {
        let x0 = (self.x0.0 as f64 / self.x0.1 as f64).max(-0.5);
        let x1 = (self.x1.0 as f64 / self.x1.1 as f64).min(0.5);
        let y0 = self.y0.0 as f64 / self.y0.1 as f64;
        let y1 = self.y1.map(|(n, d)| n as f64 / d as f64);
        if x1 <= x0 {
            return 0.0;
        }
        // integral over [x0, x1] of (1/max(y0, sqrt(1-x^2)) - 1/y1) dx,
        // normalized by the domain area pi/3.
        let inv_upper = y1.map_or(0.0, |y| 1.0 / y);
        // The lower boundary switches at |x| = sqrt(1 - y0^2) when y0 < 1;
        // integrate 1/sqrt(1-x^2) exactly (asin) and 1/y0 on the rest.
        let mut raw = 0.0;
        if y0 >= 1.0 {
            raw += (x1 - x0) * (1.0 / y0);
        } else {
            let xc = (1.0 - y0 * y0).sqrt();
            // Outside [-xc, xc]: flat 1/y0; inside: circle arc. The flat
            // part vanishes when xc >= 1/2 (in particular when y0 = 0).
            let seg = |a: f64, b: f64| -> f64 {
                if b <= a {
                    return 0.0;
                }
                b.asin() - a.asin()
            };
            let flat_left = (x1.min(-xc) - x0).max(0.0);
            let flat_right = (x1 - x0.max(xc)).max(0.0);
            if flat_left + flat_right > 0.0 {
                raw += (flat_left + flat_right) / y0;
            }
            let a = x0.max(-xc);
            let b = x1.min(xc);
            raw += seg(a, b);
        }
        raw -= (x1 - x0) * inv_upper;
        raw / (std::f64::consts::PI / 3.0)
    }
}

/// Per-discriminant entry of the statistic report.
#[derive(Debug, Clone, Serialize)]
pub struct DukeRow {
    pub d: i128,
    pub h: usize,
    pub k: usize,
    pub cycles: usize,
    pub boxes: Vec<BoxStat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxStat {
    pub spec: String,
    pub predicted: f64,
    pub observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DukeReport {
    pub p: u64,
    pub y_threshold: (i64, i64),
    pub rows: Vec<DukeRow>,
    /// Mean observed fraction per box over all discriminants.
    pub bucket_mean: Vec<BoxStat>,
}

/// Hyperbolic prediction for the half-plane slab above y (>= 1): 3/(pi y).
pub fn cusp_prediction(yn: i64, yd: i64) -> f64 {
    let y = yn as f64 / yd as f64;
    assert!(y >= 1.0);
    3.0 / (std::f64::consts::PI * y)
}

/// The equidistribution statistic: for each split discriminant, the
/// fraction of its CM points (all h of them, organized in rim cycles)
/// falling above the height threshold and in each extra box, against the
/// hyperbolic measure of the region.
pub fn duke_statistic(
    ds: &[i128],
    p: u64,
    y: (i64, i64),
    extra_boxes: &[DomainBox],
) -> Result<DukeReport, VolcanoError> {
    let mut rows = Vec::new();
    let main_box = DomainBox::above((y.0, y.1));
    let mut boxes = vec![main_box];
    boxes.extend_from_slice(extra_boxes);
    for &d in ds {
        let cycles = is_cycles(d, p)?;
        let cg = class_group(d)?;
        let pts: Vec<CmPoint> = cycles.iter().flat_map(|c| c.cm_points.clone()).collect();
        debug_assert_eq!(pts.len(), cg.h);
        let k = cycles[0].coset.len();
        let stats: Vec<BoxStat> = boxes
            .iter()
            .map(|b| {
                let count = pts.iter().filter(|t| b.contains(t)).count();
                BoxStat {
                    spec: b.label.clone(),
                    predicted: b.measure(),
                    observed: count as f64 / pts.len() as f64,
                    count,
                }
            })
            .collect();
        rows.push(DukeRow { d, h: cg.h, k, cycles: cycles.len(), boxes: stats });
    }
    let bucket_mean = (0..boxes.len())
        .map(|i| BoxStat {
            spec: boxes[i].label.clone(),
            predicted: boxes[i].measure(),
            observed: rows.iter().map(|r| r.boxes[i].observed).sum::<f64>()
                / rows.len().max(1) as f64,
            count: rows.iter().map(|r| r.boxes[i].count).sum(),
        })
        .collect();
    Ok(DukeReport { p, y_threshold: y, rows, bucket_mean })
}
