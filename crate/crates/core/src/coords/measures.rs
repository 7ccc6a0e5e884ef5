//! Entropy, cross-entropy and KL divergence in nats, with `0 · log 0 = 0`.

use crate::error::{Error, Result};

fn check<'a>(name: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &v in values {
        if v < 0.0 || v.is_nan() {
            return Err(Error::NegativeEntry {
                field: name.to_string(),
                value: v,
            });
        }
    }
    Ok(())
}

/// `p log p` with the `0 log 0 = 0` convention.
#[inline]
pub(crate) fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `-p log q`; zero when `p = 0`, `+∞` when `q = 0 < p`.
#[inline]
pub(crate) fn neg_plogq(p: f64, q: f64) -> f64 {
    if p > 0.0 {
        if q > 0.0 {
            -p * q.ln()
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    }
}

pub(crate) fn entropy_unchecked<'a>(p: impl IntoIterator<Item = &'a f64>) -> f64 {
    -p.into_iter().map(|&v| plogp(v)).sum::<f64>()
}

pub(crate) fn cross_entropy_unchecked<'a>(
    p: impl IntoIterator<Item = &'a f64>,
    q: impl IntoIterator<Item = &'a f64>,
) -> f64 {
    p.into_iter().zip(q).map(|(&a, &b)| neg_plogq(a, b)).sum()
}

/// `H[p] = −Σ p log p`.
pub fn entropy<'a, I>(p: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a f64> + Clone,
{
    check("p", p.clone())?;
    Ok(entropy_unchecked(p))
}

/// `−Σ p log q`. Summation order matches [`entropy`], so
/// `cross_entropy(p, p) == entropy(p)` exactly.
pub fn cross_entropy<'a, I, J>(p: I, q: J) -> Result<f64>
where
    I: IntoIterator<Item = &'a f64> + Clone,
    J: IntoIterator<Item = &'a f64> + Clone,
{
    check("p", p.clone())?;
    check("q", q.clone())?;
    Ok(cross_entropy_unchecked(p, q))
}

/// `KL(p ‖ f) = Σ p log p − Σ p log f` for a possibly unnormalized `f`.
/// Returns `+∞` where `f = 0 < p`.
pub fn kl<'a, I, J>(p: I, f: J) -> Result<f64>
where
    I: IntoIterator<Item = &'a f64> + Clone,
    J: IntoIterator<Item = &'a f64> + Clone,
{
    check("p", p.clone())?;
    check("f", f.clone())?;
    Ok(kl_unchecked(p, f))
}

pub(crate) fn kl_unchecked<'a>(
    p: impl IntoIterator<Item = &'a f64>,
    f: impl IntoIterator<Item = &'a f64>,
) -> f64 {
    p.into_iter()
        .zip(f)
        .map(|(&a, &b)| plogp(a) + neg_plogq(a, b))
        .sum()
}
