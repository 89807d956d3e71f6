//! Brute-force retrieval oracle over small integer vectors, shared by test
//! targets.
#![allow(dead_code)]

use std::cmp::Ordering;

use cobra::eval::{mean_average_precision, rank_queries, Direction, RetrievalOptions};
use cobra::numeric::Rng;
use cobra::Matrix;

/// Reduced non-negative fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frac {
    pub num: u128,
    pub den: u128,
}

pub fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

impl Frac {
    pub fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Frac { num: num / g, den: den / g }
    }
    fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
    fn div(self, k: u128) -> Frac {
        Frac::new(self.num, self.den * k)
    }
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Exact comparison of cos(q, a) and cos(q, b) for integer vectors, with
/// cosine 0 for zero vectors.
pub fn cmp_cos(q: &[i64], a: &[i64], b: &[i64]) -> Ordering {
    let dot = |x: &[i64], y: &[i64]| -> i128 { x.iter().zip(y).map(|(u, v)| (*u as i128) * (*v as i128)).sum() };
    if dot(q, q) == 0 {
        return Ordering::Equal;
    }
    let (na, nb) = (dot(a, a), dot(b, b));
    let (sa, sb) = (if na == 0 { 0 } else { dot(q, a) }, if nb == 0 { 0 } else { dot(q, b) });
    match sa.signum().cmp(&sb.signum()) {
        Ordering::Equal => {}
        other => return other,
    }
    match sa.signum() {
        0 => Ordering::Equal,
        1 => (sa * sa * nb).cmp(&(sb * sb * na)),
        _ => (sb * sb * na).cmp(&(sa * sa * nb)),
    }
}

pub fn oracle_ranking(q: &[i64], gallery: &[Vec<i64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&i, &j| cmp_cos(q, &gallery[j], &gallery[i]).then(i.cmp(&j)));
    order
}

pub fn oracle_ap(relevance: &[bool]) -> Option<Frac> {
    let mut hits = 0u128;
    let mut sum = Frac::new(0, 1);
    for (k, &r) in relevance.iter().enumerate() {
        if r {
            hits += 1;
            sum = sum.add(Frac::new(hits, k as u128 + 1));
        }
    }
    (hits > 0).then(|| sum.div(hits))
}

pub fn oracle_map(queries: &[Vec<i64>], ql: &[usize], gallery: &[Vec<i64>], gl: &[usize]) -> (Frac, usize) {
    let mut total = Frac::new(0, 1);
    let mut counted = 0;
    for (q, &l) in queries.iter().zip(ql) {
        let rel: Vec<bool> = oracle_ranking(q, gallery).iter().map(|&j| gl[j] == l).collect();
        if let Some(ap) = oracle_ap(&rel) {
            total = total.add(ap);
            counted += 1;
        }
    }
    if counted == 0 {
        (Frac::new(0, 1), 0)
    } else {
        (total.div(counted as u128), counted)
    }
}

pub fn to_matrix(rows: &[Vec<i64>]) -> Matrix<f64> {
    Matrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c] as f64)
}

pub struct Instance {
    pub queries: Vec<Vec<i64>>,
    pub query_labels: Vec<usize>,
    pub gallery: Vec<Vec<i64>>,
    pub gallery_labels: Vec<usize>,
}

/// At most 20 gallery items. Small integer entries produce frequent exact ties.
pub fn random_instance(rng: &mut Rng) -> Instance {
    let dim = 2 + rng.below(3);
    let n_gallery = 1 + rng.below(20);
    let n_queries = 1 + rng.below(8);
    let classes = 1 + rng.below(4);
    let vec_of = |rng: &mut Rng| (0..dim).map(|_| rng.below(5) as i64 - 2).collect::<Vec<i64>>();
    let gallery: Vec<Vec<i64>> = (0..n_gallery).map(|_| vec_of(rng)).collect();
    let queries: Vec<Vec<i64>> = (0..n_queries).map(|_| vec_of(rng)).collect();
    Instance {
        gallery_labels: (0..n_gallery).map(|_| rng.below(classes)).collect(),
        query_labels: (0..n_queries).map(|_| rng.below(classes)).collect(),
        gallery,
        queries,
    }
}

/// Compares library rankings and mAP with the oracle.
pub fn check_instance(inst: &Instance) -> Result<(), String> {
    let q = to_matrix(&inst.queries);
    let g = to_matrix(&inst.gallery);
    let (ql, gl) = (&inst.query_labels, &inst.gallery_labels);
    let dir = Direction::ImageToText;
    let report = mean_average_precision(&q, ql, &g, gl, dir, &RetrievalOptions::default()).map_err(|e| e.to_string())?;
    let ranked = rank_queries(&q, ql, &g, gl, dir).map_err(|e| e.to_string())?;
    for (query, r) in inst.queries.iter().zip(&ranked) {
        let want = oracle_ranking(query, &inst.gallery);
        if r.ranking != want {
            return Err(format!("ranking {:?} != oracle {:?}", r.ranking, want));
        }
    }
    let (expected, counted) = oracle_map(&inst.queries, ql, &inst.gallery, gl);
    if report.queries != counted {
        return Err(format!("{} queries counted, oracle {counted}", report.queries));
    }
    if (report.map - expected.to_f64()).abs() > 1e-12 {
        return Err(format!("map {} != oracle {}/{}", report.map, expected.num, expected.den));
    }
    Ok(())
}
