//! Sign-pattern bookkeeping.
//!
//! A [`SignVector`] of length `n` holds the signs of `x_1..x_n`. It induces
//! `n + 1` signs for `y_1..y_{n+1}` through `x_i = y_i / y_{i+1}`, always
//! normalized so that `y_1 > 0`. Pair indices are 1-based, `1 <= i <= j <= n`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(value: f64) -> Option<Sign> {
        if value > 0.0 {
            Some(Sign::Plus)
        } else if value < 0.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    /// `(-1)^k`.
    pub fn parity(k: usize) -> Sign {
        if k.is_multiple_of(2) {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.to_i8())
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match i8::deserialize(d)? {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(serde::de::Error::custom(format!(
                "sign must be 1 or -1, got {other}"
            ))),
        }
    }
}

/// Signs of `x_1..x_n`, with a prefix-product table so any block sign is O(1).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignVector {
    entries: Vec<Sign>,
    // prefix[k] = sign(x_1 * ... * x_k); prefix[0] = +
    prefix: Vec<Sign>,
}

impl SignVector {
    pub fn new(entries: Vec<Sign>) -> SignVector {
        let mut prefix = Vec::with_capacity(entries.len() + 1);
        prefix.push(Sign::Plus);
        for (k, &s) in entries.iter().enumerate() {
            prefix.push(prefix[k] * s);
        }
        SignVector { entries, prefix }
    }

    /// Pattern number `index` of length `n`: bit `k` set means `x_{k+1} < 0`.
    pub fn from_index(n: usize, index: u64) -> SignVector {
        let entries = (0..n)
            .map(|k| {
                if (index >> k) & 1 == 1 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect();
        SignVector::new(entries)
    }

    pub fn index(&self) -> u64 {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Sign::Minus)
            .fold(0, |acc, (k, _)| acc | (1 << k))
    }

    pub fn from_values(xs: &[f64]) -> Option<SignVector> {
        xs.iter()
            .map(|&x| Sign::of(x))
            .collect::<Option<Vec<_>>>()
            .map(SignVector::new)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Sign] {
        &self.entries
    }

    /// Sign of `x_k`, 1-based.
    pub fn get(&self, k: usize) -> Sign {
        self.entries[k - 1]
    }

    pub fn negatives(&self) -> usize {
        self.entries.iter().filter(|s| **s == Sign::Minus).count()
    }

    pub fn check_pair(&self, p: PairIndex) -> Result<()> {
        if p.i >= 1 && p.i <= p.j && p.j <= self.len() {
            Ok(())
        } else {
            Err(Error::PairOutOfRange {
                i: p.i,
                j: p.j,
                n: self.len(),
            })
        }
    }

    /// Sign of `x_i * ... * x_j`.
    pub fn product_sign(&self, p: PairIndex) -> Result<Sign> {
        self.check_pair(p)?;
        Ok(self.sign_unchecked(p.i, p.j))
    }

    #[inline]
    pub(crate) fn sign_unchecked(&self, i: usize, j: usize) -> Sign {
        self.prefix[j] * self.prefix[i - 1]
    }

    /// Canonical iff the product sign equals `(-1)^(i+j+1)`.
    #[inline]
    pub(crate) fn canonical_unchecked(&self, i: usize, j: usize) -> bool {
        self.sign_unchecked(i, j) == Sign::parity(i + j + 1)
    }

    pub fn pair_info(&self, p: PairIndex) -> Result<PairInfo> {
        self.check_pair(p)?;
        Ok(PairInfo {
            pair: p,
            product_sign: self.sign_unchecked(p.i, p.j),
            canonical: self.canonical_unchecked(p.i, p.j),
        })
    }

    /// Every pair of the index triangle, in `≺` order.
    pub fn pairs(&self) -> impl Iterator<Item = PairIndex> {
        let n = self.len();
        (1..=n).flat_map(|j| (1..=j).rev().map(move |i| PairIndex { i, j }))
    }

    /// Signs of `y_1..y_{n+1}` with `y_1 > 0`.
    pub fn y_signs(&self) -> Vec<Sign> {
        self.prefix.clone()
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.entries {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignVector({self})")
    }
}

impl FromStr for SignVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<SignVector> {
        s.chars()
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' => Ok(Sign::Minus),
                _ => Err(Error::BadPattern(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()
            .map(SignVector::new)
    }
}

impl Serialize for SignVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SignVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A 1-based index pair `(i, j)` naming the factor `1 - x_i * ... * x_j`.
///
/// `Ord` is the construction order `≺`: lower rows first, and within a row
/// larger `i` first.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub i: usize,
    pub j: usize,
}

impl PairIndex {
    pub fn new(i: usize, j: usize) -> PairIndex {
        PairIndex { i, j }
    }
}

impl fmt::Display for PairIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

impl Ord for PairIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        pair_order_cmp(*self, *other)
    }
}

impl PartialOrd for PairIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for PairIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.i, self.j].serialize(s)
    }
}

impl<'de> Deserialize<'de> for PairIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [i, j] = <[usize; 2]>::deserialize(d)?;
        Ok(PairIndex { i, j })
    }
}

/// `a ≺ b` iff `b.j > a.j`, or `b.j == a.j` and `b.i < a.i`.
pub fn pair_order_cmp(a: PairIndex, b: PairIndex) -> Ordering {
    a.j.cmp(&b.j).then(b.i.cmp(&a.i))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInfo {
    pub pair: PairIndex,
    pub product_sign: Sign,
    pub canonical: bool,
}

pub fn product_sign(sigma: &SignVector, p: PairIndex) -> Result<Sign> {
    sigma.product_sign(p)
}

/// Splits the index triangle into the non-canonical set `J` and the
/// canonical set `K`, each listed in `≺` order.
pub fn classify_pairs(sigma: &SignVector) -> (Vec<PairInfo>, Vec<PairInfo>) {
    sigma
        .pairs()
        .map(|p| PairInfo {
            pair: p,
            product_sign: sigma.sign_unchecked(p.i, p.j),
            canonical: sigma.canonical_unchecked(p.i, p.j),
        })
        .partition(|info| !info.canonical)
}

/// Counts of positive (`alpha`) and negative (`beta`) prefix products
/// `x_1 * ... * x_i`, `i = 1..n`.
pub fn alpha_beta(sigma: &SignVector) -> (usize, usize) {
    let alpha = sigma.prefix[1..].iter().filter(|s| s.is_plus()).count();
    (alpha, sigma.len() - alpha)
}

/// `min(alpha + 1, beta)`: the number of heavy groups a good partition of
/// `K` must contain, and the exponent of the bound.
pub fn heavy_target(sigma: &SignVector) -> usize {
    let (alpha, beta) = alpha_beta(sigma);
    (alpha + 1).min(beta)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelProfile {
    pub j: usize,
    pub p: usize,
    pub m: usize,
    pub stable: bool,
}

/// Counts of positive and negative entries among `y_1..y_{j+1}`.
///
/// Level `j >= 1` is stable when `min(p, m)` does not change from level
/// `j - 1`. Level 0 has no predecessor and is reported stable.
pub fn level_profile(sigma: &SignVector, j: usize) -> Result<LevelProfile> {
    if j > sigma.len() {
        return Err(Error::LevelOutOfRange {
            level: j,
            n: sigma.len(),
        });
    }
    let counts = |level: usize| {
        let p = sigma.prefix[..=level]
            .iter()
            .filter(|s| s.is_plus())
            .count();
        (p, level + 1 - p)
    };
    let (p, m) = counts(j);
    let stable = if j == 0 {
        true
    } else {
        let (pp, pm) = counts(j - 1);
        pp.min(pm) == p.min(m)
    };
    Ok(LevelProfile { j, p, m, stable })
}

/// Stability flag for every level `1..=n`, indexed by level (entry 0 unused).
pub fn stability_table(sigma: &SignVector) -> Vec<bool> {
    let mut out = vec![true; sigma.len() + 1];
    let (mut p, mut m) = (1usize, 0usize);
    for j in 1..=sigma.len() {
        let before = p.min(m);
        if sigma.prefix[j].is_plus() {
            p += 1;
        } else {
            m += 1;
        }
        out[j] = before == p.min(m);
    }
    out
}

/// Counts of canonical pairs of sign `+` and `-` with `i = 1` or `j = n`.
pub fn boundary_counts(sigma: &SignVector) -> (usize, usize) {
    let n = sigma.len();
    sigma
        .pairs()
        .filter(|p| (p.i == 1 || p.j == n) && sigma.canonical_unchecked(p.i, p.j))
        .fold((0, 0), |(plus, minus), p| {
            if sigma.sign_unchecked(p.i, p.j).is_plus() {
                (plus + 1, minus)
            } else {
                (plus, minus + 1)
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(s: &str) -> SignVector {
        s.parse().unwrap()
    }

    fn pairs_of(infos: &[PairInfo]) -> Vec<(usize, usize, i8)> {
        let mut v: Vec<_> = infos
            .iter()
            .map(|x| (x.pair.i, x.pair.j, x.product_sign.to_i8()))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn product_sign_examples() {
        assert_eq!(
            product_sign(&sv("+-"), PairIndex::new(1, 2)).unwrap(),
            Sign::Minus
        );
        assert_eq!(
            product_sign(&sv("+-+"), PairIndex::new(1, 3)).unwrap(),
            Sign::Minus
        );
        assert_eq!(
            product_sign(&sv("-+-"), PairIndex::new(1, 3)).unwrap(),
            Sign::Plus
        );
        assert!(matches!(
            product_sign(&sv("+-"), PairIndex::new(2, 3)),
            Err(Error::PairOutOfRange { .. })
        ));
        assert!(product_sign(&sv("+-"), PairIndex::new(2, 1)).is_err());
        assert!(product_sign(&sv("+-"), PairIndex::new(0, 1)).is_err());
    }

    #[test]
    fn classify_examples() {
        let (j, k) = classify_pairs(&sv("-+-"));
        assert_eq!(
            pairs_of(&j),
            vec![(1, 2, -1), (1, 3, 1), (2, 2, 1), (2, 3, -1)]
        );
        assert_eq!(pairs_of(&k), vec![(1, 1, -1), (3, 3, -1)]);

        let (j, k) = classify_pairs(&sv("++"));
        assert_eq!(pairs_of(&j), vec![(1, 1, 1), (2, 2, 1)]);
        assert_eq!(pairs_of(&k), vec![(1, 2, 1)]);

        let (j, k) = classify_pairs(&sv("+"));
        assert_eq!(pairs_of(&j), vec![(1, 1, 1)]);
        assert!(k.is_empty());
    }

    #[test]
    fn order_examples() {
        let p = PairIndex::new;
        assert_eq!(pair_order_cmp(p(1, 1), p(2, 2)), Ordering::Less);
        assert_eq!(pair_order_cmp(p(2, 2), p(1, 2)), Ordering::Less);
        assert_eq!(pair_order_cmp(p(1, 2), p(3, 3)), Ordering::Less);
        assert_eq!(pair_order_cmp(p(2, 3), p(2, 3)), Ordering::Equal);
    }

    #[test]
    fn pairs_iterate_in_order() {
        let s = sv("+-+-+");
        let all: Vec<_> = s.pairs().collect();
        assert_eq!(all.len(), 15);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn alpha_beta_examples() {
        assert_eq!(alpha_beta(&sv("-+-")), (1, 2));
        assert_eq!(alpha_beta(&sv("++")), (2, 0));
        assert_eq!(alpha_beta(&sv("")), (0, 0));
    }

    #[test]
    fn level_profile_examples() {
        let s = sv("-+-");
        let l2 = level_profile(&s, 2).unwrap();
        assert_eq!((l2.p, l2.m), (1, 2));
        let l3 = level_profile(&s, 3).unwrap();
        assert_eq!((l3.p, l3.m, l3.stable), (2, 2, false));
        let l0 = level_profile(&sv("--+"), 0).unwrap();
        assert_eq!((l0.p, l0.m), (1, 0));
        assert!(matches!(
            level_profile(&s, 4),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn stability_table_matches_profiles() {
        for idx in 0..(1u64 << 7) {
            let s = SignVector::from_index(7, idx);
            let table = stability_table(&s);
            for j in 1..=7 {
                assert_eq!(table[j], level_profile(&s, j).unwrap().stable);
            }
        }
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_counts(&sv("-++")), (1, 2));
        assert_eq!(boundary_counts(&sv("+")), (0, 0));
        assert_eq!(boundary_counts(&sv("-")), (0, 1));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            "x+".parse::<SignVector>(),
            Err(Error::BadPattern(_))
        ));
        assert_eq!(sv("+-").to_string(), "+-");
    }

    #[test]
    fn index_round_trip() {
        for idx in 0..64 {
            assert_eq!(SignVector::from_index(6, idx).index(), idx);
        }
    }
}
