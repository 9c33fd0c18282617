//! Numeric certificates for the product bound.
//!
//! For `x` in `([-1,1] \ {0})^n` the product `f_n(x)` of all factors
//! `1 - x_i * ... * x_j` is split along good partitions of `J` and `K`.
//! Each group is an instance of one of four elementary inequalities, so its
//! product is at most 1, or at most 2 for heavy groups, and the total is at
//! most `2^min(p, m)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{build_eta_with_fallback, build_pi, PartitionGroup, Shape, Target};
use crate::signs::{heavy_target, PairIndex, Sign, SignVector};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// `x_1..x_n`, each nonzero with `|x_i| <= 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RealVectorX(Vec<f64>);

impl RealVectorX {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (k, &x) in values.iter().enumerate() {
            if !x.is_finite() || x == 0.0 || x.abs() > 1.0 {
                return Err(Error::Domain(format!(
                    "x_{} = {x} must be nonzero with |x| <= 1",
                    k + 1
                )));
            }
        }
        Ok(RealVectorX(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> SignVector {
        SignVector::from_values(&self.0).expect("entries are nonzero")
    }

    /// `x_i * ... * x_j` for a 1-based block.
    fn block(&self, i: usize, j: usize) -> f64 {
        self.0[i - 1..j].iter().product()
    }
}

/// `y_1..y_n`, nonzero with strictly increasing absolute values.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RealVectorY(Vec<f64>);

impl RealVectorY {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (k, &y) in values.iter().enumerate() {
            if !y.is_finite() || y == 0.0 {
                return Err(Error::Domain(format!(
                    "y_{} = {y} must be finite and nonzero",
                    k + 1
                )));
            }
        }
        if let Some(k) = values.windows(2).position(|w| w[0].abs() >= w[1].abs()) {
            return Err(Error::Domain(format!(
                "|y_{}| = {} must be smaller than |y_{}| = {}",
                k + 1,
                values[k].abs(),
                k + 2,
                values[k + 1].abs()
            )));
        }
        Ok(RealVectorY(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `(p, m)`: counts of positive and negative entries.
    pub fn sign_counts(&self) -> (usize, usize) {
        let p = self.0.iter().filter(|y| **y > 0.0).count();
        (p, self.0.len() - p)
    }
}

/// How long products are accumulated.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProductMode {
    #[default]
    Plain,
    /// Sum of logarithms of the nonzero factors; any zero factor makes the
    /// product exactly zero.
    Log,
}

fn accumulate(factors: impl Iterator<Item = f64>, mode: ProductMode) -> f64 {
    match mode {
        ProductMode::Plain => factors.product(),
        ProductMode::Log => {
            let mut log_sum = 0.0;
            for a in factors {
                if a == 0.0 {
                    return 0.0;
                }
                log_sum += a.ln();
            }
            log_sum.exp()
        }
    }
}

/// `1 - x_i * ... * x_j`.
pub fn eval_factor(x: &RealVectorX, p: PairIndex) -> Result<f64> {
    if p.i < 1 || p.i > p.j || p.j > x.len() {
        return Err(Error::PairOutOfRange {
            i: p.i,
            j: p.j,
            n: x.len(),
        });
    }
    Ok(1.0 - x.block(p.i, p.j))
}

fn all_factors(x: &RealVectorX) -> impl Iterator<Item = f64> + '_ {
    let v = x.values();
    (0..v.len()).flat_map(move |i| {
        v[i..].iter().scan(1.0, |acc, &xk| {
            *acc *= xk;
            Some(1.0 - *acc)
        })
    })
}

/// `f_n(x)`: product of `1 - x_i * ... * x_j` over `1 <= i <= j <= n`.
pub fn eval_f(x: &RealVectorX) -> f64 {
    eval_f_with(x, ProductMode::Plain)
}

pub fn eval_f_with(x: &RealVectorX, mode: ProductMode) -> f64 {
    accumulate(all_factors(x), mode)
}

/// `x_i = y_i / y_{i+1}`.
pub fn x_from_y(y: &RealVectorY) -> RealVectorX {
    RealVectorX(y.values().windows(2).map(|w| w[0] / w[1]).collect())
}

/// `P_n(y)`: product of `1 - y_i / y_j` over `1 <= i < j <= n`.
pub fn eval_p(y: &RealVectorY) -> f64 {
    let v = y.values();
    (0..v.len())
        .flat_map(|j| (0..j).map(move |i| 1.0 - v[i] / v[j]))
        .product()
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohstCheck {
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v >= lo && v <= hi
}

/// Evaluates one of the four elementary inequalities:
///
/// 1. `a in [-1,1]`: `1 - a <= 2`
/// 2. `a in [0,1]`, `b in [-1,0]`: `(1-a)(1-ab) <= 1`
/// 3. `a, b in [-1,1]`: `(1-a)(1-b)(1-ab) <= 2`
/// 4. `a in [0,1]`, `b, c in [-1,0]`: `(1-a)(1-ab)(1-ac)(1-abc) <= 1`
///
/// `holds` allows a relative slack of [`DEFAULT_TOLERANCE`].
pub fn check_pohst_case(case: u8, a: f64, b: Option<f64>, c: Option<f64>) -> Result<PohstCheck> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Domain(format!("case {case} needs argument {name}")))
    };
    let domain = |ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "arguments ({a}, {b:?}, {c:?}) outside the domain of case {case}"
            )))
        }
    };
    let (value, bound) = match case {
        1 => {
            domain(in_range(a, -1.0, 1.0))?;
            (1.0 - a, 2.0)
        }
        2 => {
            let b = need(b, "b")?;
            domain(in_range(a, 0.0, 1.0) && in_range(b, -1.0, 0.0))?;
            ((1.0 - a) * (1.0 - a * b), 1.0)
        }
        3 => {
            let b = need(b, "b")?;
            domain(in_range(a, -1.0, 1.0) && in_range(b, -1.0, 1.0))?;
            ((1.0 - a) * (1.0 - b) * (1.0 - a * b), 2.0)
        }
        4 => {
            let (b, c) = (need(b, "b")?, need(c, "c")?);
            domain(in_range(a, 0.0, 1.0) && in_range(b, -1.0, 0.0) && in_range(c, -1.0, 0.0))?;
            (
                (1.0 - a) * (1.0 - a * b) * (1.0 - a * c) * (1.0 - a * b * c),
                1.0,
            )
        }
        _ => {
            return Err(Error::Domain(format!(
                "no elementary inequality numbered {case}"
            )))
        }
    };
    Ok(PohstCheck {
        value,
        bound,
        holds: value <= bound * (1.0 + DEFAULT_TOLERANCE),
    })
}

/// 2 for heavy groups, 1 otherwise.
pub fn group_bound(g: &PartitionGroup) -> u32 {
    if g.is_heavy() {
        2
    } else {
        1
    }
}

/// The elementary inequality a group instantiates, with its arguments
/// expressed as block products of `x`. Assumes `g` is well formed.
pub fn pohst_instance(x: &RealVectorX, g: &PartitionGroup) -> (u8, f64, Option<f64>, Option<f64>) {
    let sign = |p: &PairIndex| Sign::of(x.block(p.i, p.j)).unwrap_or(Sign::Plus);
    let pos: Vec<PairIndex> = g
        .members
        .iter()
        .filter(|p| sign(p) == Sign::Plus)
        .copied()
        .collect();
    let neg: Vec<PairIndex> = g
        .members
        .iter()
        .filter(|p| sign(p) == Sign::Minus)
        .copied()
        .collect();
    match g.shape {
        Shape::PositiveSingleton => (2, x.block(g.members[0].i, g.members[0].j), Some(0.0), None),
        Shape::NegativeSingleton => (1, x.block(g.members[0].i, g.members[0].j), None, None),
        Shape::MixedPair => {
            let (p, q) = (pos[0], neg[0]);
            let b = if q.j == p.j {
                x.block(q.i, p.i - 1)
            } else {
                x.block(p.j + 1, q.j)
            };
            (2, x.block(p.i, p.j), Some(b), None)
        }
        Shape::RectangleQuad => {
            let (a, b) = if pos[0].i > pos[1].i {
                (pos[0], pos[1])
            } else {
                (pos[1], pos[0])
            };
            (
                4,
                x.block(a.i, a.j),
                Some(x.block(b.i, a.i - 1)),
                Some(x.block(a.j + 1, b.j)),
            )
        }
        Shape::LTriple => {
            let p = pos[0];
            let row = *neg.iter().find(|q| q.j == p.j).expect("row negative");
            let col = *neg.iter().find(|q| q.i == p.i).expect("column negative");
            // (i, j-l') then the part of the row negative above it; any
            // overlap only lowers the top factor.
            let low = x.block(col.i, col.j);
            let high = x.block(col.j + 1, row.j);
            (3, low, Some(high), None)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCertificate {
    pub set: Target,
    pub shape: Shape,
    pub members: Vec<PairIndex>,
    pub product: f64,
    pub bound: u32,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum CertificateInput {
    X(Vec<f64>),
    Y(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub input: CertificateInput,
    pub sigma: SignVector,
    /// Number of x variables.
    pub x_count: usize,
    /// Number of y variables, `x_count + 1`.
    pub y_count: usize,
    pub exponent: usize,
    pub bound: f64,
    pub total: f64,
    /// Product of the per-group products.
    pub grouped_total: f64,
    pub groups: Vec<GroupCertificate>,
    /// The K partition came from the case ladder (not the search fallback).
    pub ladder: bool,
    /// Product of group bounds equals `2^heavy_count`.
    pub bounds_match_heavy: bool,
    pub ok: bool,
    pub tolerance: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tolerance: f64,
    pub mode: ProductMode,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            tolerance: DEFAULT_TOLERANCE,
            mode: ProductMode::Plain,
        }
    }
}

pub fn certify_x(x: &RealVectorX) -> Result<Certificate> {
    certify_x_with(x, CertifyOptions::default())
}

pub fn certify_x_with(x: &RealVectorX, opts: CertifyOptions) -> Result<Certificate> {
    let sigma = x.signs();
    let pi = build_pi(&sigma)?;
    let eta = build_eta_with_fallback(&sigma)?;
    let exponent = heavy_target(&sigma);
    let slack = 1.0 + opts.tolerance;

    let mut groups = Vec::with_capacity(pi.groups.len() + eta.partition.groups.len());
    for (set, part) in [(Target::K, &eta.partition), (Target::J, &pi)] {
        for g in &part.groups {
            let product = accumulate(g.members.iter().map(|p| 1.0 - x.block(p.i, p.j)), opts.mode);
            let bound = group_bound(g);
            groups.push(GroupCertificate {
                set,
                shape: g.shape,
                members: g.members.clone(),
                product,
                bound,
                ok: product <= f64::from(bound) * slack,
            });
        }
    }

    let total = eval_f_with(x, opts.mode);
    let grouped_total = accumulate(groups.iter().map(|g| g.product), opts.mode);
    let bound = 2f64.powi(exponent as i32);
    let bounds_product: f64 = groups.iter().map(|g| f64::from(g.bound)).product();
    let bounds_match_heavy = bounds_product == 2f64.powi(eta.partition.heavy_count as i32);
    let consistent =
        (total - grouped_total).abs() <= opts.tolerance * total.abs().max(grouped_total.abs());
    let ok =
        groups.iter().all(|g| g.ok) && total <= bound * slack && consistent && bounds_match_heavy;

    Ok(Certificate {
        input: CertificateInput::X(x.values().to_vec()),
        x_count: sigma.len(),
        y_count: sigma.len() + 1,
        sigma,
        exponent,
        bound,
        total,
        grouped_total,
        groups,
        ladder: eta.ladder,
        bounds_match_heavy,
        ok,
        tolerance: opts.tolerance,
    })
}

pub fn certify_y(y: &RealVectorY) -> Result<Certificate> {
    certify_y_with(y, CertifyOptions::default())
}

/// Certificate for `P_n(y)` through `x_i = y_i / y_{i+1}`. The exponent is
/// taken from the signs of `y` and must agree with `min(alpha + 1, beta)`.
pub fn certify_y_with(y: &RealVectorY, opts: CertifyOptions) -> Result<Certificate> {
    if y.is_empty() {
        return Err(Error::Domain("need at least one y value".into()));
    }
    let mut cert = certify_x_with(&x_from_y(y), opts)?;
    let (p, m) = y.sign_counts();
    if p.min(m) != cert.exponent {
        cert.ok = false;
    }
    cert.exponent = p.min(m);
    cert.bound = 2f64.powi(cert.exponent as i32);
    cert.input = CertificateInput::Y(y.values().to_vec());
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    fn xv(v: &[f64]) -> RealVectorX {
        RealVectorX::new(v.to_vec()).unwrap()
    }

    fn yv(v: &[f64]) -> RealVectorY {
        RealVectorY::new(v.to_vec()).unwrap()
    }

    #[test]
    fn factor_examples() {
        assert_eq!(
            eval_factor(&xv(&[-1.0]), PairIndex::new(1, 1)).unwrap(),
            2.0
        );
        assert_eq!(eval_factor(&xv(&[0.5]), PairIndex::new(1, 1)).unwrap(), 0.5);
        assert_eq!(
            eval_factor(&xv(&[-0.5, 0.5]), PairIndex::new(1, 2)).unwrap(),
            1.25
        );
        assert!(eval_factor(&xv(&[0.5]), PairIndex::new(1, 2)).is_err());
    }

    #[test]
    fn f_examples() {
        assert_eq!(eval_f(&xv(&[-1.0])), 2.0);
        assert!(close(eval_f(&xv(&[-0.5, 0.5])), 0.9375));
        assert_eq!(eval_f(&xv(&[])), 1.0);
        assert!(close(
            eval_f_with(&xv(&[-0.5, 0.5]), ProductMode::Log),
            0.9375
        ));
        assert_eq!(eval_f_with(&xv(&[1.0, 0.5]), ProductMode::Log), 0.0);
    }

    #[test]
    fn x_from_y_examples() {
        assert_eq!(x_from_y(&yv(&[1.0, -2.0, 4.0])).values(), &[-0.5, -0.5]);
        assert_eq!(x_from_y(&yv(&[1.0, 2.0])).values(), &[0.5]);
        assert_eq!(
            x_from_y(&yv(&[3.0, -6.0, 12.0, -24.0])).values(),
            &[-0.5, -0.5, -0.5]
        );
    }

    #[test]
    fn p_examples() {
        assert!(close(eval_p(&yv(&[1.0, -2.0])), 1.5));
        assert!(close(eval_p(&yv(&[1.0, -2.0, 4.0])), 1.6875));
        assert!(close(eval_p(&yv(&[1.0, 2.0, 4.0])), 0.1875));
    }

    #[test]
    fn vector_domains() {
        assert!(RealVectorX::new(vec![0.0]).is_err());
        assert!(RealVectorX::new(vec![1.5]).is_err());
        assert!(RealVectorX::new(vec![f64::NAN]).is_err());
        assert!(RealVectorX::new(vec![1.0, -1.0]).is_ok());
        assert!(RealVectorY::new(vec![1.0, -1.0]).is_err());
        assert!(RealVectorY::new(vec![2.0, 1.0]).is_err());
        assert!(RealVectorY::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn pohst_examples() {
        let c = check_pohst_case(1, -1.0, None, None).unwrap();
        assert_eq!((c.value, c.bound, c.holds), (2.0, 2.0, true));
        let c = check_pohst_case(3, -1.0, Some(0.0), None).unwrap();
        assert_eq!((c.value, c.bound, c.holds), (2.0, 2.0, true));
        let c = check_pohst_case(4, 1.0, Some(-1.0), Some(-1.0)).unwrap();
        assert_eq!((c.value, c.bound, c.holds), (0.0, 1.0, true));
        assert!(check_pohst_case(2, -0.5, Some(-0.5), None).is_err());
        assert!(check_pohst_case(4, 0.5, Some(0.5), Some(-0.5)).is_err());
        assert!(check_pohst_case(2, 0.5, None, None).is_err());
        assert!(check_pohst_case(5, 0.5, None, None).is_err());
    }

    #[test]
    fn group_bounds() {
        let p = PairIndex::new;
        assert_eq!(group_bound(&PartitionGroup::positive(p(1, 2))), 1);
        assert_eq!(group_bound(&PartitionGroup::negative(p(1, 1))), 2);
        assert_eq!(
            group_bound(&PartitionGroup::quad(p(2, 2), p(1, 2), p(2, 3), p(1, 3))),
            1
        );
        assert_eq!(
            group_bound(&PartitionGroup::ltriple(p(1, 3), p(2, 3), p(1, 1))),
            2
        );
    }

    #[test]
    fn certify_x_examples() {
        let c = certify_x(&xv(&[-0.5, 0.5])).unwrap();
        assert!(c.ok);
        assert!(close(c.total, 0.9375));
        assert_eq!((c.exponent, c.bound), (1, 2.0));

        let c = certify_x(&xv(&[0.3, 0.7])).unwrap();
        assert!(c.ok);
        assert_eq!(c.bound, 1.0);
        assert!(c.groups.iter().all(|g| g.product < 1.0));

        let c = certify_x(&xv(&[-1.0])).unwrap();
        assert!(c.ok);
        assert_eq!((c.total, c.bound), (2.0, 2.0));
    }

    #[test]
    fn certify_y_examples() {
        let c = certify_y(&yv(&[1.0, -2.0, 4.0])).unwrap();
        assert!(c.ok);
        assert!(close(c.total, 1.6875));
        assert_eq!(c.bound, 2.0);

        let c = certify_y(&yv(&[1.0, 2.0, 4.0, 8.0])).unwrap();
        assert!(c.ok);
        assert_eq!(c.bound, 1.0);

        let c = certify_y(&yv(&[1.0, -1.0001])).unwrap();
        assert!(c.ok);
        assert!((c.total - 1.0 / 1.0001 - 1.0).abs() < 1e-12);
        assert!(c.total > 1.9999 && c.total <= 2.0);
        assert!(matches!(
            RealVectorY::new(vec![1.0, -1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn negative_leading_y_gives_same_exponent() {
        let a = certify_y(&yv(&[-1.0, 2.0, -4.0, 8.0])).unwrap();
        let b = certify_y(&yv(&[1.0, -2.0, 4.0, -8.0])).unwrap();
        assert_eq!(a.exponent, b.exponent);
        assert!(a.ok && b.ok);
    }

    #[test]
    fn pohst_instances_reproduce_group_products() {
        let x = xv(&[-0.7, 0.4, -0.9, 0.8, -0.3, 0.6]);
        let c = certify_x(&x).unwrap();
        for g in &c.groups {
            let group = PartitionGroup {
                shape: g.shape,
                members: g.members.clone(),
            };
            let (case, a, b, cc) = pohst_instance(&x, &group);
            let check = check_pohst_case(case, a, b, cc).unwrap();
            assert!(check.holds);
            assert_eq!(check.bound as u32, g.bound);
            // Mixed pairs, quads, singletons: exact instances.
            if g.shape != Shape::LTriple {
                assert!(close(check.value, g.product), "{g:?} {check:?}");
            } else {
                assert!(g.product <= check.value * (1.0 + 1e-12));
            }
        }
    }
}
