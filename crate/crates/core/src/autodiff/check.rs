use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Var};
use crate::params::{ModelParams, ParamId};
use crate::{Error, Real, Result};

/// Worst relative error seen for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub per_param: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Anything that owns a set of parameters.
pub trait Parameterized<T: Real = f64> {
    fn params(&self) -> &ModelParams<T>;
    fn params_mut(&mut self) -> &mut ModelParams<T>;
}

impl<T: Real> Parameterized<T> for ModelParams<T> {
    fn params(&self) -> &ModelParams<T> {
        self
    }

    fn params_mut(&mut self) -> &mut ModelParams<T> {
        self
    }
}

const MIN_COORDS: usize = 200;

/// Compares the reverse-mode gradient of `loss` with central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// At least 200 coordinates (or all of them, if there are fewer) are
/// sampled, spread evenly over the parameter tensors. The error of one
/// coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<S, F>(subject: &S, eps: f64, seed: u64, mut loss: F) -> Result<GradCheckReport>
where
    S: Parameterized + Clone,
    F: for<'a> FnMut(&mut Graph<'a, f64>, &'a S) -> Result<Var>,
{
    check_eps(eps)?;
    let analytic = analytic_gradients(subject, &mut loss)?;
    let mut work = subject.clone();
    let mut eval = |p: &S| -> Result<f64> {
        let mut g = Graph::inference();
        let l = loss(&mut g, p)?;
        let v = g.scalar(l);
        check_finite(v)?;
        Ok(v)
    };
    compare(subject.params(), &analytic, seed, |id, c| {
        let orig = subject.params().get(id).data()[c];
        work.params_mut().get_mut(id).data_mut()[c] = orig + eps;
        let plus = eval(&work)?;
        work.params_mut().get_mut(id).data_mut()[c] = orig - eps;
        let minus = eval(&work)?;
        work.params_mut().get_mut(id).data_mut()[c] = orig;
        Ok((plus - minus) / (2.0 * eps))
    })
}

/// Like [`grad_check`], but the numeric derivative of coordinate `c` of
/// tensor `id` comes from `numeric(id, c)`.
///
/// The analytic side always runs in 64 bits. Supplying a higher precision
/// difference here keeps the oracle's own roundoff well below the tolerance
/// when gradients are small.
pub fn grad_check_against<S, F, N>(subject: &S, seed: u64, mut loss: F, numeric: N) -> Result<GradCheckReport>
where
    S: Parameterized,
    F: for<'a> FnMut(&mut Graph<'a, f64>, &'a S) -> Result<Var>,
    N: FnMut(ParamId, usize) -> Result<f64>,
{
    let analytic = analytic_gradients(subject, &mut loss)?;
    compare(subject.params(), &analytic, seed, numeric)
}

/// Central difference at one coordinate, evaluated at the subject's own
/// precision and rounded to 64 bits. The coordinate is restored afterwards.
pub fn central_difference<T, S, F>(subject: &mut S, id: ParamId, c: usize, eps: f64, mut eval: F) -> Result<f64>
where
    T: Real,
    S: Parameterized<T>,
    F: FnMut(&S) -> Result<T>,
{
    check_eps(eps)?;
    let h = T::of(eps);
    let orig = subject.params().get(id).data()[c];
    subject.params_mut().get_mut(id).data_mut()[c] = orig + h;
    let plus = eval(subject);
    subject.params_mut().get_mut(id).data_mut()[c] = orig - h;
    let minus = eval(subject);
    subject.params_mut().get_mut(id).data_mut()[c] = orig;
    let (plus, minus) = (plus?, minus?);
    check_finite(plus.as_f64())?;
    check_finite(minus.as_f64())?;
    Ok(((plus - minus) / (h + h)).as_f64())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("grad_check needs eps > 0, got {eps}")))
    }
}

fn analytic_gradients<S, F>(subject: &S, loss: &mut F) -> Result<Vec<Vec<f64>>>
where
    S: Parameterized,
    F: for<'a> FnMut(&mut Graph<'a, f64>, &'a S) -> Result<Var>,
{
    let params = subject.params();
    if params.is_empty() {
        return Err(Error::EmptyInput("grad_check with no parameters"));
    }
    let mut g = Graph::new();
    // Register every parameter up front so unused ones report zero.
    let vars: Vec<Var> = params.ids().map(|id| params.var(&mut g, id)).collect();
    let l = loss(&mut g, subject)?;
    check_finite(g.scalar(l))?;
    g.backward(l)?;
    Ok(vars
        .iter()
        .zip(params.iter())
        .map(|(&v, (_, t))| match g.grad(v) {
            Some(d) => d.to_vec(),
            None => alloc::vec![0.0; t.numel()],
        })
        .collect())
}

fn compare<N>(params: &ModelParams<f64>, analytic: &[Vec<f64>], seed: u64, mut numeric: N) -> Result<GradCheckReport>
where
    N: FnMut(ParamId, usize) -> Result<f64>,
{
    let quota = coordinate_quota(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        per_param: Vec::new(),
    };
    for id in params.ids() {
        let n = params.get(id).numel();
        let take = quota[id.0];
        let coords: Vec<usize> = if take >= n {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, take).into_vec();
            c.sort_unstable();
            c
        };
        let mut worst: f64 = 0.0;
        for &c in &coords {
            worst = worst.max(relative_error(analytic[id.0][c], numeric(id, c)?));
        }
        report.checked += coords.len();
        report.max_rel_err = report.max_rel_err.max(worst);
        report.per_param.push(ParamReport {
            name: params.name(id).to_string(),
            checked: coords.len(),
            max_rel_err: worst,
        });
    }
    Ok(report)
}

/// Spreads the coordinate budget over the tensors, smallest first, so that
/// small tensors are checked exhaustively and the total reaches the minimum.
fn coordinate_quota(params: &ModelParams<f64>) -> Vec<usize> {
    let sizes: Vec<usize> = params.iter().map(|(_, t)| t.numel()).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| sizes[i]);
    let mut quota = alloc::vec![0; sizes.len()];
    let mut remaining = MIN_COORDS;
    for (k, &i) in order.iter().enumerate() {
        let share = remaining.div_ceil(sizes.len() - k).max(4);
        quota[i] = sizes[i].min(share);
        remaining = remaining.saturating_sub(quota[i]);
    }
    quota
}

pub(crate) fn relative_error(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(1e-8);
    (a - n).abs() / denom
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("loss is not finite ({v})")))
    }
}
