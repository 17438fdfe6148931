//! Weight distributions with regularly varying tails.
//!
//! A spec describes the law of one i.i.d. weight entry `W` through its
//! two-sided tail `P(|W| > t) = t^{-α} L(t)` (symmetric sign), where `L` is
//! slowly varying. Three modes:
//!
//! * **heavy** — `α ∈ (0, 2)` (or exactly 2 with an infinite-variance tail):
//!   the law is exactly the displayed tail, supported on `[t₀, ∞)` in
//!   magnitude, where `t₀` is the point at which `t^{-α} L(t)` first drops
//!   below 1; magnitudes are drawn by inverting the tail, signs are
//!   independent fair coin flips.
//! * **finite** — a named symmetric law with finite variance (`α` must be 2):
//!   uniform, centered normal, or Rademacher. These feed the Gaussian branch
//!   of the limit through the truncated-second-moment transform `L̃`.
//! * **stable** — exact SαS(α, σ) weights, for which the norming constants
//!   below are available in closed form and finite-width error is smallest.
//!
//! The norming sequence `a_n = inf{t : t^{-α} L₀(t) ≤ 1/n}` (with `L₀ = L`
//! for α < 2 and `L₀ = L̃` for α = 2) is what the network simulator divides
//! layer sums by; `b_n = n · a_n^{-α} L₀(a_n)` measures how exactly the
//! infimum is attained and equals 1 for every continuous-tailed spec here.

use crate::rng::Stream;
use crate::stable::{c_alpha, sample_sas, sample_sas_one, sample_std_normal, StableParams};
use crate::{quad, Error, Real, Result};
use serde::{Deserialize, Serialize};

/// Slowly varying factor `L(t)` of a heavy tail.
#[derive(Clone, Debug, PartialEq)]
pub enum SlowlyVarying<T> {
    /// `L ≡ c`.
    Constant { c: T },
    /// `L(t) = (1 + β · log₊ t)^γ`.
    LogPower { beta: T, gamma: T },
    /// `L(t) = (1 + β · ln(1 + log₊ t))^γ`.
    IterLog { beta: T, gamma: T },
    /// Piecewise log-log linear interpolation through `(t, L(t))` points,
    /// constant beyond the first and last point (hence slowly varying).
    Table { points: Vec<(T, T)> },
}

impl<T: Real> SlowlyVarying<T> {
    fn validate(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant { c } => {
                if !(*c > T::zero()) || !c.is_finite() {
                    return Err(Error::config(format!(
                        "constant slowly varying factor must be positive, got {c}"
                    )));
                }
            }
            SlowlyVarying::LogPower { beta, gamma } | SlowlyVarying::IterLog { beta, gamma } => {
                if !(*beta > T::zero()) || !beta.is_finite() || !gamma.is_finite() {
                    return Err(Error::config(format!(
                        "log-type slowly varying factor needs β > 0 and finite γ, got β={beta}, γ={gamma}"
                    )));
                }
            }
            SlowlyVarying::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::config("table slowly varying factor needs ≥ 2 points"));
                }
                for win in points.windows(2) {
                    if !(win[0].0 < win[1].0) {
                        return Err(Error::config("table abscissae must be strictly increasing"));
                    }
                }
                for &(t, l) in points {
                    if !(t > T::zero() && l > T::zero()) || !t.is_finite() || !l.is_finite() {
                        return Err(Error::config("table entries must be positive and finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Evaluate `L(t)` for `t > 0`.
    pub fn eval(&self, t: T) -> T {
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogPower { beta, gamma } => {
                let logp = t.ln().max(T::zero());
                (T::one() + *beta * logp).powf(*gamma)
            }
            SlowlyVarying::IterLog { beta, gamma } => {
                let logp = t.ln().max(T::zero());
                (T::one() + *beta * (T::one() + logp).ln()).powf(*gamma)
            }
            SlowlyVarying::Table { points } => {
                let first = points.first().expect("validated non-empty");
                let last = points.last().expect("validated non-empty");
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let idx = points.partition_point(|&(x, _)| x < t);
                let (t0, l0) = points[idx - 1];
                let (t1, l1) = points[idx];
                let frac = (t.ln() - t0.ln()) / (t1.ln() - t0.ln());
                (l0.ln() + frac * (l1.ln() - l0.ln())).exp()
            }
        }
    }
}

/// Named symmetric finite-variance laws for the α = 2 branch.
#[derive(Clone, Debug, PartialEq)]
pub enum FiniteLaw<T> {
    /// Uniform on `[−h, h]`.
    Uniform { half_width: T },
    /// Centered normal with standard deviation `sd`.
    Normal { sd: T },
    /// `±a` with equal probability.
    Rademacher { a: T },
}

impl<T: Real> FiniteLaw<T> {
    fn validate(&self) -> Result<()> {
        let (name, v) = match self {
            FiniteLaw::Uniform { half_width } => ("uniform half-width", *half_width),
            FiniteLaw::Normal { sd } => ("normal standard deviation", *sd),
            FiniteLaw::Rademacher { a } => ("rademacher magnitude", *a),
        };
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn variance(&self) -> T {
        match self {
            FiniteLaw::Uniform { half_width } => *half_width * *half_width / T::of(3.0),
            FiniteLaw::Normal { sd } => *sd * *sd,
            FiniteLaw::Rademacher { a } => *a * *a,
        }
    }

    fn tail(&self, t: T) -> T {
        if t < T::zero() {
            return T::one();
        }
        match self {
            FiniteLaw::Uniform { half_width } => {
                if t >= *half_width {
                    T::zero()
                } else {
                    T::one() - t / *half_width
                }
            }
            FiniteLaw::Normal { sd } => (t / (*sd * T::SQRT_2())).erfc(),
            FiniteLaw::Rademacher { a } => {
                if t >= *a {
                    T::zero()
                } else {
                    T::one()
                }
            }
        }
    }

    /// Point worth splitting integrals at (support edge / kink), if any.
    fn kink(&self) -> Option<T> {
        match self {
            FiniteLaw::Uniform { half_width } => Some(*half_width),
            FiniteLaw::Normal { .. } => None,
            FiniteLaw::Rademacher { a } => Some(*a),
        }
    }
}

/// How the weight law is specified.
#[derive(Clone, Debug, PartialEq)]
pub enum TailMode<T> {
    Heavy { sv: SlowlyVarying<T> },
    Finite { law: FiniteLaw<T> },
    Stable { sigma: T },
}

/// A validated weight-law specification. See the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct TailSpec<T> {
    alpha: T,
    mode: TailMode<T>,
    /// Heavy mode only: magnitude support floor (tail first drops below 1).
    t0: Option<T>,
}

/// Relative tolerance of the `t₀` and `a_n` bisections.
const ROOT_REL_TOL: f64 = 1e-10;
/// Iteration cap for all bracketing bisections.
const ROOT_MAX_ITER: usize = 200;
/// Absolute tolerance target for the `L̃` quadrature.
const LTILDE_TOL: f64 = 1e-9;

impl<T: Real> TailSpec<T> {
    pub fn heavy(alpha: T, sv: SlowlyVarying<T>) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::of(2.0)) || !alpha.is_finite() {
            return Err(Error::config(format!(
                "heavy tail index must lie in (0, 2], got {alpha}"
            )));
        }
        sv.validate()?;
        let mut spec = TailSpec {
            alpha,
            mode: TailMode::Heavy { sv },
            t0: None,
        };
        let t0 = spec.solve_t0()?;
        spec.t0 = Some(t0);
        spec.check_tail_monotone(t0)?;
        Ok(spec)
    }

    pub fn finite(law: FiniteLaw<T>) -> Result<Self> {
        law.validate()?;
        Ok(TailSpec {
            alpha: T::of(2.0),
            mode: TailMode::Finite { law },
            t0: None,
        })
    }

    pub fn stable(alpha: T, sigma: T) -> Result<Self> {
        // Reuse the parameter domain checks.
        let _ = StableParams::new(alpha, sigma)?;
        Ok(TailSpec {
            alpha,
            mode: TailMode::Stable { sigma },
            t0: None,
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mode(&self) -> &TailMode<T> {
        &self.mode
    }

    /// `true` when this law feeds the Gaussian (α = 2) branch of the limit.
    pub fn is_gaussian(&self) -> bool {
        self.alpha == T::of(2.0)
    }

    /// Heavy mode: the magnitude support floor `t₀`.
    pub fn support_floor(&self) -> Option<T> {
        self.t0
    }

    /// Two-sided tail `P(|W| > t)` of the configured law.
    ///
    /// Exact for heavy and finite modes. For stable mode with α < 2 this is
    /// the regular-variation envelope `t^{-α} σ^α / c_α` that the norming
    /// theory uses (the true SαS tail is asymptotically equivalent); for
    /// α = 2 it is the exact Gaussian tail.
    pub fn tail_prob(&self, t: T) -> T {
        if !(t > T::zero()) {
            return T::one();
        }
        match &self.mode {
            TailMode::Heavy { sv } => {
                let t0 = self.t0.expect("heavy spec carries t0");
                if t < t0 {
                    T::one()
                } else {
                    (t.powf(-self.alpha) * sv.eval(t)).min(T::one())
                }
            }
            TailMode::Finite { law } => law.tail(t),
            TailMode::Stable { sigma } => {
                if self.alpha == T::of(2.0) {
                    // N(0, 2σ²), exactly.
                    (t / (*sigma * T::of(2.0))).erfc()
                } else {
                    let c = c_alpha(self.alpha).expect("validated α");
                    (t.powf(-self.alpha) * sigma.powf(self.alpha) / c).min(T::one())
                }
            }
        }
    }

    /// The slowly varying factor entering the norming sequence:
    /// `L` itself for α < 2 and the truncated-second-moment transform `L̃`
    /// for α = 2.
    pub fn l_zero(&self, x: T) -> Result<T> {
        if self.alpha < T::of(2.0) {
            match &self.mode {
                TailMode::Heavy { sv } => Ok(sv.eval(x)),
                TailMode::Stable { sigma } => {
                    Ok(sigma.powf(self.alpha) / c_alpha(self.alpha)?)
                }
                TailMode::Finite { .. } => unreachable!("finite laws are α = 2"),
            }
        } else {
            self.l_tilde(x)
        }
    }

    /// Truncated second moment `L̃(x) = ∫₀^x y · P(|W| > y) dy`.
    ///
    /// For α = 2 this is the slowly varying factor governing the Gaussian
    /// norming; it tends to `Var(W)/2` whenever the variance is finite.
    /// Evaluated by adaptive quadrature, splitting at the tail's kink.
    pub fn l_tilde(&self, x: T) -> Result<T> {
        if !(x > T::zero()) || !x.is_finite() {
            return Err(Error::config(format!(
                "l_tilde needs a positive finite argument, got {x}"
            )));
        }
        if let TailMode::Stable { sigma } = &self.mode {
            if self.alpha == T::of(2.0) {
                // Closed form for N(0, 2σ²): L̃(∞) = σ², approached smoothly;
                // integrate the erfc tail directly for finite x.
                let s = *sigma;
                return quad::integrate(
                    |y: T| y * (y / (s * T::of(2.0))).erfc(),
                    T::zero(),
                    x,
                    T::of(LTILDE_TOL),
                );
            }
        }
        let kink = match &self.mode {
            TailMode::Heavy { .. } => self.t0,
            TailMode::Finite { law } => law.kink(),
            TailMode::Stable { .. } => None,
        };
        let tol = T::of(LTILDE_TOL);
        match kink {
            Some(k) if x > k => {
                // Below the kink the integrand is y · (tail), with tail ≡ 1
                // for heavy mode (exact) and smooth for finite laws.
                let below = match &self.mode {
                    TailMode::Heavy { .. } => k * k * T::of(0.5),
                    _ => quad::integrate(|y: T| y * self.tail_prob(y), T::zero(), k, tol)?,
                };
                let above =
                    quad::integrate(|y: T| y * self.tail_prob(y), k, x, tol)?;
                Ok(below + above)
            }
            _ => {
                if matches!(self.mode, TailMode::Heavy { .. }) {
                    // Entirely inside the support floor: tail ≡ 1.
                    Ok(x * x * T::of(0.5))
                } else {
                    quad::integrate(|y: T| y * self.tail_prob(y), T::zero(), x, tol)
                }
            }
        }
    }

    /// `t^{-α} L₀(t)`, the function whose 1/n level set defines `a_n`.
    fn g_zero(&self, t: T) -> Result<T> {
        Ok(t.powf(-self.alpha) * self.l_zero(t)?)
    }

    /// Norming sequence `a_n = inf{t > 0 : t^{-α} L₀(t) ≤ 1/n}`.
    ///
    /// Closed forms where the slowly varying part is constant; otherwise a
    /// doubling bracket followed by bisection to 1e−10 relative width.
    pub fn a_n(&self, n: u64) -> Result<T> {
        if n == 0 {
            return Err(Error::config("a_n needs n ≥ 1"));
        }
        let nf = T::of(n as f64);
        let inv_alpha = self.alpha.recip();
        match &self.mode {
            TailMode::Heavy { sv: SlowlyVarying::Constant { c } } if self.alpha < T::of(2.0) => {
                return Ok((nf * *c).powf(inv_alpha));
            }
            TailMode::Stable { sigma } => {
                if self.alpha == T::of(2.0) {
                    return Ok(*sigma * nf.sqrt());
                }
                let c = c_alpha(self.alpha)?;
                return Ok((nf * sigma.powf(self.alpha) / c).powf(inv_alpha));
            }
            _ => {}
        }

        let target = nf.recip();
        // Find a point with g₀ ≤ 1/n by doubling, starting from a point
        // with g₀ > 1/n found by halving (g₀ → ∞ as t → 0 for heavy mode;
        // for α = 2 it starts at P(|W| > 0)/2 ≤ 1/2, so n ≥ 3 always has a
        // crossing and smaller n are rejected as out of scope).
        let mut hi = T::one();
        let mut grew = 0;
        while self.g_zero(hi)? > target {
            hi = hi * T::of(2.0);
            grew += 1;
            if grew > 2100 {
                return Err(Error::numeric("a_n bracket search failed to find upper bound"));
            }
        }
        let mut lo = hi * T::of(0.5);
        let mut shrank = 0;
        while self.g_zero(lo)? <= target {
            lo = lo * T::of(0.5);
            shrank += 1;
            if shrank > 2100 {
                return Err(Error::numeric(format!(
                    "a_n: no level crossing found — t^(-α) L₀(t) never exceeds 1/n for n = {n}"
                )));
            }
        }
        // Invariant: g₀(lo) > 1/n ≥ g₀(hi). Bisect to the crossing.
        for _ in 0..ROOT_MAX_ITER {
            if (hi - lo) <= T::of(ROOT_REL_TOL) * hi {
                break;
            }
            let mid = T::of(0.5) * (lo + hi);
            if self.g_zero(mid)? <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `b_n = n · a_n^{-α} L₀(a_n)`; equals 1 (up to root tolerance) for
    /// every continuous-tailed spec and tends to 1 in general.
    pub fn b_n(&self, n: u64) -> Result<T> {
        let a = self.a_n(n)?;
        Ok(T::of(n as f64) * self.g_zero(a)?)
    }

    /// RNG words consumed per variate by [`TailSpec::sample`]; fixed per
    /// spec so draw positions are pure functions of the draw index.
    pub fn words_per_draw(&self) -> usize {
        match &self.mode {
            TailMode::Heavy { .. } => 1,
            TailMode::Finite { law } => match law {
                FiniteLaw::Normal { .. } => 2,
                _ => 1,
            },
            TailMode::Stable { .. } => 2,
        }
    }

    /// Draw one weight. Word consumption per [`TailSpec::words_per_draw`].
    ///
    /// Heavy mode inverts the tail: the magnitude solves
    /// `P(|W| > m) = u` exactly, and the sign comes from bit 0 of the same
    /// word (disjoint from the 53 mantissa bits that form `u`).
    #[inline]
    pub fn sample_one(&self, stream: &mut Stream) -> T {
        match &self.mode {
            TailMode::Heavy { sv } => {
                let word = stream.next_u64();
                let u: T = T::unit_open01(word);
                let mag = self.invert_tail(sv, u);
                if word & 1 == 0 {
                    mag
                } else {
                    -mag
                }
            }
            TailMode::Finite { law } => match law {
                FiniteLaw::Uniform { half_width } => {
                    let u: T = stream.unit();
                    (T::of(2.0) * u - T::one()) * *half_width
                }
                FiniteLaw::Normal { sd } => *sd * sample_std_normal(stream),
                FiniteLaw::Rademacher { a } => {
                    if stream.next_u64() & 1 == 0 {
                        *a
                    } else {
                        -*a
                    }
                }
            },
            TailMode::Stable { sigma } => {
                let params = StableParams::new(self.alpha, *sigma).expect("validated");
                sample_sas_one(&params, stream)
            }
        }
    }

    /// Bulk sampling; hoists per-spec constants out of the loop and gathers
    /// RNG words a block at a time so the draw transforms of independent
    /// slots overlap instead of serializing on one dependency chain. Word
    /// consumption per slot is identical to [`TailSpec::sample_one`] in a
    /// loop, so draw positions stay pure functions of the draw index.
    pub fn sample(&self, stream: &mut Stream, out: &mut [T]) {
        use crate::stable::DRAW_CHUNK;
        let mut words = [0u64; DRAW_CHUNK];
        let mut gather = |stream: &mut Stream, words: &mut [u64]| {
            for w in words.iter_mut() {
                *w = stream.next_u64();
            }
        };
        match &self.mode {
            TailMode::Heavy { sv: SlowlyVarying::Constant { .. } } => {
                let t0 = self.t0.expect("heavy spec carries t0");
                let neg_inv_alpha = -self.alpha.recip();
                for chunk in out.chunks_mut(DRAW_CHUNK) {
                    let n = chunk.len();
                    gather(stream, &mut words[..n]);
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        let word = words[i];
                        let u: T = T::unit_open01(word);
                        let mag = t0 * u.fast_powf(neg_inv_alpha);
                        *slot = if word & 1 == 0 { mag } else { -mag };
                    }
                }
            }
            TailMode::Stable { sigma } => {
                let params = StableParams::new(self.alpha, *sigma).expect("validated");
                sample_sas(&params, stream, out);
            }
            TailMode::Finite { law } => match law {
                FiniteLaw::Uniform { half_width } => {
                    let hw = *half_width;
                    for chunk in out.chunks_mut(DRAW_CHUNK) {
                        let n = chunk.len();
                        gather(stream, &mut words[..n]);
                        for (i, slot) in chunk.iter_mut().enumerate() {
                            let u: T = T::unit_open01(words[i]);
                            *slot = (T::of(2.0) * u - T::one()) * hw;
                        }
                    }
                }
                FiniteLaw::Normal { sd } => {
                    let sd = *sd;
                    let mut wpair = [0u64; 2 * DRAW_CHUNK];
                    for chunk in out.chunks_mut(DRAW_CHUNK) {
                        let n = chunk.len();
                        gather(stream, &mut wpair[..2 * n]);
                        for (i, slot) in chunk.iter_mut().enumerate() {
                            let u1 = T::unit_open01(wpair[2 * i]);
                            let u2 = T::unit_open01(wpair[2 * i + 1]);
                            *slot = sd * crate::stable::normal_from_units(u1, u2);
                        }
                    }
                }
                FiniteLaw::Rademacher { a } => {
                    let a = *a;
                    for chunk in out.chunks_mut(DRAW_CHUNK) {
                        let n = chunk.len();
                        gather(stream, &mut words[..n]);
                        for (i, slot) in chunk.iter_mut().enumerate() {
                            *slot = if words[i] & 1 == 0 { a } else { -a };
                        }
                    }
                }
            },
            _ => {
                for slot in out.iter_mut() {
                    *slot = self.sample_one(stream);
                }
            }
        }
    }

    /// Magnitude inversion `G(m) = u` for heavy mode.
    #[inline]
    fn invert_tail(&self, sv: &SlowlyVarying<T>, u: T) -> T {
        match sv {
            SlowlyVarying::Constant { .. } => {
                let t0 = self.t0.expect("heavy spec carries t0");
                t0 * u.fast_powf(-self.alpha.recip())
            }
            SlowlyVarying::LogPower { beta, gamma } => {
                // Solve −α m + γ ln(1 + β m) = ln u in m = ln t, m ≥ ln t₀.
                self.invert_log_family(u, |m| {
                    let v = T::one() + *beta * m.max(T::zero());
                    (*gamma * v.ln(), -self.alpha + *gamma * *beta / v)
                })
            }
            SlowlyVarying::IterLog { beta, gamma } => {
                self.invert_log_family(u, |m| {
                    let mp = m.max(T::zero());
                    let inner = T::one() + *beta * (T::one() + mp).ln();
                    (
                        *gamma * inner.ln(),
                        -self.alpha + *gamma * *beta / (inner * (T::one() + mp)),
                    )
                })
            }
            SlowlyVarying::Table { .. } => {
                // Bisection in log-magnitude; the tail is piecewise power.
                let t0 = self.t0.expect("heavy spec carries t0");
                let mut lo = t0.ln();
                let mut hi = lo + T::one();
                let ln_u = u.ln();
                let g_ln = |m: T| -> T {
                    let t = m.exp();
                    (-self.alpha) * m + sv.eval(t).ln()
                };
                let mut grew = 0;
                while g_ln(hi) > ln_u {
                    hi = hi + (hi - lo);
                    grew += 1;
                    if grew > 200 {
                        break;
                    }
                }
                for _ in 0..ROOT_MAX_ITER {
                    let mid = T::of(0.5) * (lo + hi);
                    if g_ln(mid) > ln_u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < T::of(1e-13) * (T::one() + hi.abs()) {
                        break;
                    }
                }
                (T::of(0.5) * (lo + hi)).exp()
            }
        }
    }

    /// Safeguarded Newton in `m = ln t` for the log-family tails.
    /// `parts(m)` returns `(ln L(e^m), d/dm ln G(e^m))`.
    #[inline]
    fn invert_log_family(&self, u: T, parts: impl Fn(T) -> (T, T)) -> T {
        let t0 = self.t0.expect("heavy spec carries t0");
        let m0 = t0.ln();
        let ln_u = u.ln();
        let g = |m: T| -> (T, T) {
            let (ln_l, dg) = parts(m);
            (-self.alpha * m + ln_l, dg)
        };
        // Bracket: G(e^{m0}) = 1 ≥ u, and G decreases in m beyond m0.
        let mut lo = m0;
        let mut hi = (m0 + T::one()).max(-ln_u / self.alpha + T::one());
        let mut grew = 0;
        while g(hi).0 > ln_u {
            hi = hi + (hi - lo) + T::one();
            grew += 1;
            if grew > 200 {
                break;
            }
        }
        let mut m = (-ln_u / self.alpha).max(m0);
        for _ in 0..60 {
            let (val, deriv) = g(m);
            if val > ln_u {
                lo = m;
            } else {
                hi = m;
            }
            let step = (val - ln_u) / deriv;
            // Converged: keep the current iterate. Testing this before
            // proposing the next point matters — once the bracket update has
            // set `m` as an endpoint, a zero step would otherwise fail the
            // strict interior test below and bounce to the midpoint.
            if (hi - lo) < T::of(1e-14) * (T::one() + m.abs())
                || step.abs() < T::of(1e-15) * (T::one() + m.abs())
            {
                break;
            }
            let next = m - step;
            m = if next > lo && next < hi {
                next
            } else {
                T::of(0.5) * (lo + hi)
            };
        }
        m.exp()
    }

    /// Find `t₀` for heavy mode: bracket the final crossing of
    /// `G(t) = t^{-α} L(t)` through 1, then bisect.
    fn solve_t0(&self) -> Result<T> {
        let sv = match &self.mode {
            TailMode::Heavy { sv } => sv,
            _ => unreachable!(),
        };
        if let SlowlyVarying::Constant { c } = sv {
            return Ok(c.powf(self.alpha.recip()));
        }
        let g = |t: T| t.powf(-self.alpha) * sv.eval(t);
        // Walk up from t = 1 while G ≥ 1 (this steps over any transient hump
        // above 1); walk down if G(1) < 1 (G → ∞ as t → 0).
        let mut hi = T::one();
        let mut steps = 0;
        while g(hi) >= T::one() {
            hi = hi * T::of(2.0);
            steps += 1;
            if steps > 2100 {
                return Err(Error::config(
                    "tail never drops below 1 — not a probability tail",
                ));
            }
        }
        let mut lo = hi * T::of(0.5);
        while g(lo) < T::one() {
            lo = lo * T::of(0.5);
            steps += 1;
            if steps > 4200 {
                return Err(Error::numeric("t0 bracket search failed"));
            }
        }
        for _ in 0..ROOT_MAX_ITER {
            if (hi - lo) <= T::of(ROOT_REL_TOL) * hi {
                break;
            }
            let mid = T::of(0.5) * (lo + hi);
            if g(mid) >= T::one() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(T::of(0.5) * (lo + hi))
    }

    /// Reject specs whose displayed tail is not monotone nonincreasing on
    /// `[t₀, 10⁶ t₀]` (checked on a 1000-point geometric grid).
    fn check_tail_monotone(&self, t0: T) -> Result<()> {
        let sv = match &self.mode {
            TailMode::Heavy { sv } => sv,
            _ => return Ok(()),
        };
        let g = |t: T| t.powf(-self.alpha) * sv.eval(t);
        let factor = T::of(1e6).powf(T::of(1.0 / 999.0));
        let mut t = t0;
        let mut prev = g(t);
        for _ in 0..999 {
            t = t * factor;
            let cur = g(t);
            if cur > prev * (T::one() + T::of(1e-9)) {
                return Err(Error::config(format!(
                    "tail t^(-α) L(t) increases at t ≈ {t}; it must be nonincreasing beyond t₀ = {t0}"
                )));
            }
            prev = cur;
        }
        Ok(())
    }

    /// Monte Carlo check of the small-`t` characteristic-function expansion:
    /// compares `lhs = 1 − ψ̂(t)` (empirical, `n_draws` samples) against
    /// `rhs = c_α t^α L₀(1/t)`, the leading term of `1 − ψ(t)`.
    /// Returns the two sides, their ratio, and the Monte Carlo standard
    /// error of the left side.
    pub fn small_t_cf_check(
        &self,
        t: T,
        n_draws: usize,
        stream: &mut Stream,
    ) -> Result<SmallTReport<T>> {
        if !(t > T::zero()) || n_draws == 0 {
            return Err(Error::config("small_t_cf_check needs t > 0 and draws ≥ 1"));
        }
        let mut sum = T::zero();
        let mut sumsq = T::zero();
        let mut buf = vec![T::zero(); 8192];
        let mut remaining = n_draws;
        while remaining > 0 {
            let take = remaining.min(buf.len());
            self.sample(stream, &mut buf[..take]);
            for &x in &buf[..take] {
                let one_minus_cos = T::one() - (t * x).cos();
                sum += one_minus_cos;
                sumsq += one_minus_cos * one_minus_cos;
            }
            remaining -= take;
        }
        let n = T::of(n_draws as f64);
        let lhs = sum / n;
        let var = (sumsq / n - lhs * lhs).max(T::zero());
        let se = (var / n).sqrt();
        let rhs = c_alpha(self.alpha)? * t.powf(self.alpha) * self.l_zero(t.recip())?;
        Ok(SmallTReport {
            lhs,
            rhs,
            ratio: lhs / rhs,
            stderr: se,
        })
    }
}

/// Result of [`TailSpec::small_t_cf_check`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SmallTReport<T> {
    /// Empirical `1 − ψ̂(t)`.
    pub lhs: T,
    /// Predicted leading term `c_α t^α L₀(1/t)`.
    pub rhs: T,
    pub ratio: T,
    /// Monte Carlo standard error of `lhs`.
    pub stderr: T,
}

// ---------------------------------------------------------------------------
// Interchange format
// ---------------------------------------------------------------------------

/// Wire form: `{"alpha": a, "mode": "heavy"|"finite"|"stable", ...}` with
/// `sv`/`law` as `{"kind": ..., "params": [...]}` and `sigma` for stable
/// mode. Unknown fields are rejected.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpecWire<T> {
    pub alpha: T,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sv: Option<KindParams<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<KindParams<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<T>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindParams<T> {
    pub kind: String,
    pub params: Vec<T>,
}

impl<T: Real> Serialize for TailSpec<T> {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        TailSpecWire::from(self.clone()).serialize(ser)
    }
}

impl<'de, T: Real> Deserialize<'de> for TailSpec<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = TailSpecWire::<T>::deserialize(de)?;
        TailSpec::try_from(wire).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> From<TailSpec<T>> for TailSpecWire<T> {
    fn from(spec: TailSpec<T>) -> Self {
        let (mode, sv, law, sigma) = match spec.mode {
            TailMode::Heavy { sv } => {
                let kp = match sv {
                    SlowlyVarying::Constant { c } => KindParams {
                        kind: "constant".into(),
                        params: vec![c],
                    },
                    SlowlyVarying::LogPower { beta, gamma } => KindParams {
                        kind: "log-power".into(),
                        params: vec![beta, gamma],
                    },
                    SlowlyVarying::IterLog { beta, gamma } => KindParams {
                        kind: "iterated-log".into(),
                        params: vec![beta, gamma],
                    },
                    SlowlyVarying::Table { points } => KindParams {
                        kind: "table".into(),
                        params: points.into_iter().flat_map(|(t, l)| [t, l]).collect(),
                    },
                };
                ("heavy", Some(kp), None, None)
            }
            TailMode::Finite { law } => {
                let kp = match law {
                    FiniteLaw::Uniform { half_width } => KindParams {
                        kind: "uniform".into(),
                        params: vec![half_width],
                    },
                    FiniteLaw::Normal { sd } => KindParams {
                        kind: "normal".into(),
                        params: vec![sd],
                    },
                    FiniteLaw::Rademacher { a } => KindParams {
                        kind: "rademacher".into(),
                        params: vec![a],
                    },
                };
                ("finite", None, Some(kp), None)
            }
            TailMode::Stable { sigma } => ("stable", None, None, Some(sigma)),
        };
        TailSpecWire {
            alpha: spec.alpha,
            mode: mode.into(),
            sv,
            law,
            sigma,
        }
    }
}

impl<T: Real> TryFrom<TailSpecWire<T>> for TailSpec<T> {
    type Error = Error;

    fn try_from(wire: TailSpecWire<T>) -> Result<Self> {
        fn take<T>(params: &[T], n: usize, kind: &str) -> Result<()>
        where
            T: Copy,
        {
            if params.len() != n {
                return Err(Error::config(format!(
                    "slowly varying kind '{kind}' takes {n} parameter(s), got {}",
                    params.len()
                )));
            }
            Ok(())
        }
        match wire.mode.as_str() {
            "heavy" => {
                let kp = wire
                    .sv
                    .ok_or_else(|| Error::config("heavy mode requires an 'sv' object"))?;
                if wire.law.is_some() || wire.sigma.is_some() {
                    return Err(Error::config("heavy mode takes only 'sv'"));
                }
                let sv = match kp.kind.as_str() {
                    "constant" => {
                        take(&kp.params, 1, "constant")?;
                        SlowlyVarying::Constant { c: kp.params[0] }
                    }
                    "log-power" => {
                        take(&kp.params, 2, "log-power")?;
                        SlowlyVarying::LogPower {
                            beta: kp.params[0],
                            gamma: kp.params[1],
                        }
                    }
                    "iterated-log" => {
                        take(&kp.params, 2, "iterated-log")?;
                        SlowlyVarying::IterLog {
                            beta: kp.params[0],
                            gamma: kp.params[1],
                        }
                    }
                    "table" => {
                        if kp.params.len() < 4 || kp.params.len() % 2 != 0 {
                            return Err(Error::config(
                                "table kind takes flattened (t, L) pairs, at least two",
                            ));
                        }
                        SlowlyVarying::Table {
                            points: kp.params.chunks(2).map(|c| (c[0], c[1])).collect(),
                        }
                    }
                    other => {
                        return Err(Error::config(format!(
                            "unknown slowly varying kind '{other}'"
                        )))
                    }
                };
                TailSpec::heavy(wire.alpha, sv)
            }
            "finite" => {
                let kp = wire
                    .law
                    .ok_or_else(|| Error::config("finite mode requires a 'law' object"))?;
                if wire.sv.is_some() || wire.sigma.is_some() {
                    return Err(Error::config("finite mode takes only 'law'"));
                }
                if wire.alpha != T::of(2.0) {
                    return Err(Error::config(format!(
                        "finite-variance mode requires α = 2, got {}",
                        wire.alpha
                    )));
                }
                let law = match kp.kind.as_str() {
                    "uniform" => {
                        take(&kp.params, 1, "uniform")?;
                        FiniteLaw::Uniform { half_width: kp.params[0] }
                    }
                    "normal" => {
                        take(&kp.params, 1, "normal")?;
                        FiniteLaw::Normal { sd: kp.params[0] }
                    }
                    "rademacher" => {
                        take(&kp.params, 1, "rademacher")?;
                        FiniteLaw::Rademacher { a: kp.params[0] }
                    }
                    other => {
                        return Err(Error::config(format!("unknown finite law '{other}'")))
                    }
                };
                TailSpec::finite(law)
            }
            "stable" => {
                if wire.sv.is_some() || wire.law.is_some() {
                    return Err(Error::config("stable mode takes only 'sigma'"));
                }
                let sigma = wire
                    .sigma
                    .ok_or_else(|| Error::config("stable mode requires 'sigma'"))?;
                TailSpec::stable(wire.alpha, sigma)
            }
            other => Err(Error::config(format!("unknown tail mode '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn pareto(alpha: f64) -> TailSpec<f64> {
        TailSpec::heavy(alpha, SlowlyVarying::Constant { c: 1.0 }).unwrap()
    }

    #[test]
    fn pareto_basics() {
        let spec = pareto(1.5);
        assert_eq!(spec.support_floor(), Some(1.0));
        assert_eq!(spec.tail_prob(0.5), 1.0);
        assert!((spec.tail_prob(2.0) - 2.0f64.powf(-1.5)).abs() < 1e-15);
        // a_n = n^{1/α} exactly for the unit Pareto tail.
        assert!((spec.a_n(1000).unwrap() - 1000.0f64.powf(2.0 / 3.0)).abs() < 1e-9);
        assert!((spec.b_n(1_000_000).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scaled_constant_moves_support_floor() {
        let spec = TailSpec::heavy(1.0f64, SlowlyVarying::Constant { c: 4.0 }).unwrap();
        assert!((spec.support_floor().unwrap() - 4.0).abs() < 1e-12);
        assert!((spec.a_n(100).unwrap() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn log_power_tail_solves_t0_and_a_n() {
        // α = 1, L = 1 + log₊t: G(1) = 1 and G decreasing ⇒ t₀ = 1.
        let spec = TailSpec::heavy(
            1.0f64,
            SlowlyVarying::LogPower { beta: 1.0, gamma: 1.0 },
        )
        .unwrap();
        // The crossing at t₀ = 1 is tangent (G′(1) = 0 for these parameters),
        // so G(1+ε) − 1 ≈ −ε²/2 sits below f64 resolution for ε < 1e-8 and
        // the bisection can stop anywhere in that flat band.
        assert!((spec.support_floor().unwrap() - 1.0).abs() < 1e-6);
        // a_n solves t = n (1 + ln t); check the defining relation instead
        // of a closed form.
        let a = spec.a_n(1000).unwrap();
        assert!((a.powf(-1.0) * (1.0 + a.ln()) - 1e-3).abs() < 1e-12);
        assert!((spec.b_n(1000).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transient_hump_is_stepped_over() {
        // α = 0.5, β = γ = 1: G rises above 1 after t = 1 before falling.
        let spec = TailSpec::heavy(
            0.5f64,
            SlowlyVarying::LogPower { beta: 1.0, gamma: 1.0 },
        )
        .unwrap();
        let t0 = spec.support_floor().unwrap();
        assert!(t0 > 1.0, "t0 = {t0} should sit beyond the hump");
        let g = |t: f64| t.powf(-0.5) * (1.0 + t.ln().max(0.0));
        assert!((g(t0) - 1.0).abs() < 1e-7);
        assert!(g(t0 * 1.01) < 1.0);
    }

    #[test]
    fn uniform_l_tilde_matches_closed_form() {
        // Uniform[−1,1]: L̃(x) = x²/2 − x³/3 below 1, then 1/6.
        let spec = TailSpec::finite(FiniteLaw::Uniform { half_width: 1.0f64 }).unwrap();
        let x = 0.7;
        assert!((spec.l_tilde(x).unwrap() - (x * x / 2.0 - x * x * x / 3.0)).abs() < 1e-9);
        assert!((spec.l_tilde(5.0).unwrap() - 1.0 / 6.0).abs() < 1e-9);
        // a_n with constant L̃ = 1/6: a_n = √(n/6).
        assert!((spec.a_n(1_000_000).unwrap() - (1_000_000.0f64 / 6.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn heavy_alpha_two_l_tilde_grows_logarithmically() {
        // Pareto with α = 2: L̃(x) = 1/2 + ln x for x ≥ 1.
        let spec = TailSpec::heavy(2.0, SlowlyVarying::Constant { c: 1.0 }).unwrap();
        for &x in &[2.0, 10.0, 1000.0] {
            let expect = 0.5 + (x as f64).ln();
            assert!(
                (spec.l_tilde(x).unwrap() - expect).abs() < 1e-8,
                "L̃({x})"
            );
        }
    }

    #[test]
    fn rademacher_norming() {
        let spec = TailSpec::finite(FiniteLaw::Rademacher { a: 1.0 }).unwrap();
        // L̃(x) = min(x,1)²/2 ⇒ a_n = √(n/2).
        assert!((spec.a_n(1_000_000).unwrap() - (5e5f64).sqrt()).abs() < 1e-3);
        assert!((spec.b_n(1_000_000).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stable_mode_closed_forms() {
        let spec = TailSpec::stable(1.5, 1.0).unwrap();
        let c = crate::stable::c_alpha(1.5f64).unwrap();
        assert!((spec.a_n(1000).unwrap() - (1000.0 / c).powf(2.0 / 3.0)).abs() < 1e-9);
        assert!((spec.b_n(1000).unwrap() - 1.0).abs() < 1e-12);
        let g = TailSpec::stable(2.0f64, 0.5).unwrap();
        assert!((g.a_n(400).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matches_tail_probabilities() {
        let spec = pareto(1.5);
        let mut stream = SeedTree::new(11).stream(0);
        let n = 400_000;
        let mut buf = vec![0.0f64; n];
        spec.sample(&mut stream, &mut buf);
        for &threshold in &[1.5, 4.0, 20.0] {
            let expect = spec.tail_prob(threshold);
            let got = buf.iter().filter(|x| x.abs() > threshold).count() as f64 / n as f64;
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (got - expect).abs() < 4.0 * se + 1e-9,
                "tail at {threshold}: {got} vs {expect}"
            );
        }
        // Sign balance.
        let pos = buf.iter().filter(|x| **x > 0.0).count() as f64 / n as f64;
        assert!((pos - 0.5).abs() < 0.005, "positive fraction {pos}");
        // Support floor respected.
        assert!(buf.iter().all(|x| x.abs() >= 1.0));
    }

    #[test]
    fn log_power_sampling_matches_tail() {
        let spec = TailSpec::heavy(
            1.2,
            SlowlyVarying::LogPower { beta: 0.7, gamma: 1.3 },
        )
        .unwrap();
        let mut stream = SeedTree::new(12).stream(0);
        let n = 200_000;
        let mut buf = vec![0.0f64; n];
        spec.sample(&mut stream, &mut buf);
        for &threshold in &[3.0, 12.0, 80.0] {
            let expect = spec.tail_prob(threshold);
            let got = buf.iter().filter(|x| x.abs() > threshold).count() as f64 / n as f64;
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (got - expect).abs() < 4.0 * se + 1e-9,
                "tail at {threshold}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn heavy_draw_consumes_one_word() {
        let spec = pareto(1.5);
        let root = SeedTree::new(3);
        let mut s = root.stream(4);
        let _first: f64 = spec.sample_one(&mut s);
        let second: f64 = spec.sample_one(&mut s);
        let mut jumped = root.stream(4);
        jumped.seek(1);
        let je: f64 = spec.sample_one(&mut jumped);
        assert_eq!(second, je);
    }

    #[test]
    fn table_kind_interpolates_and_samples() {
        let spec = TailSpec::heavy(
            1.5f64,
            SlowlyVarying::Table {
                points: vec![(1.0, 1.0), (10.0, 1.5), (100.0, 1.2)],
            },
        )
        .unwrap();
        let sv = match spec.mode() {
            TailMode::Heavy { sv } => sv,
            _ => unreachable!(),
        };
        assert!((sv.eval(0.5) - 1.0).abs() < 1e-12);
        assert!((sv.eval(1000.0) - 1.2).abs() < 1e-12);
        assert!(sv.eval(3.0) > 1.0 && sv.eval(3.0) < 1.5);

        let mut stream = SeedTree::new(13).stream(0);
        let n = 100_000;
        let mut buf = vec![0.0f64; n];
        spec.sample(&mut stream, &mut buf);
        let threshold = 8.0;
        let expect = spec.tail_prob(threshold);
        let got = buf.iter().filter(|x| x.abs() > threshold).count() as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((got - expect).abs() < 4.0 * se);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(TailSpec::heavy(0.0, SlowlyVarying::Constant { c: 1.0 }).is_err());
        assert!(TailSpec::heavy(2.5, SlowlyVarying::Constant { c: 1.0 }).is_err());
        assert!(TailSpec::heavy(1.5, SlowlyVarying::Constant { c: -1.0 }).is_err());
        assert!(TailSpec::finite(FiniteLaw::Uniform { half_width: 0.0 }).is_err());
        assert!(TailSpec::stable(1.5, -1.0).is_err());
        // A table whose tail dips below 1 (fixing t₀ ≈ 1.6) and then rises
        // again on (10, 10⁶): non-monotone beyond t₀, so inversion sampling
        // is impossible and construction must fail.
        let rising = TailSpec::heavy(
            0.1,
            SlowlyVarying::Table {
                points: vec![(1.0, 1.0), (10.0, 0.2), (1e6, 5000.0)],
            },
        );
        assert!(rising.is_err());
        // By contrast, a table that only rises while the tail is still
        // clipped at 1 is fine: here G = t^{-0.1}·L stays ≥ 1 until
        // t₀ ≈ 10¹¹⁰, and beyond that L is constant so the tail is
        // monotone where it matters.
        let clipped_rise = TailSpec::heavy(
            0.1,
            SlowlyVarying::Table {
                points: vec![(1.0, 1.0), (1e12, 1e11)],
            },
        );
        assert!(clipped_rise.is_ok());
    }

    #[test]
    fn wire_roundtrip_and_unknown_fields() {
        let spec = TailSpec::heavy(
            1.5,
            SlowlyVarying::LogPower { beta: 1.0, gamma: 2.0 },
        )
        .unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: TailSpec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);

        let with_junk = r#"{"alpha":1.5,"mode":"heavy","sv":{"kind":"constant","params":[1.0]},"extra":1}"#;
        assert!(serde_json::from_str::<TailSpec<f64>>(with_junk).is_err());
        let finite_bad_alpha =
            r#"{"alpha":1.5,"mode":"finite","law":{"kind":"uniform","params":[1.0]}}"#;
        assert!(serde_json::from_str::<TailSpec<f64>>(finite_bad_alpha).is_err());
    }

    #[test]
    fn small_t_check_close_to_one_for_pareto() {
        let spec = pareto(1.5);
        let mut stream = SeedTree::new(21).stream(0);
        let rep = spec.small_t_cf_check(0.02, 400_000, &mut stream).unwrap();
        assert!(
            (rep.ratio - 1.0).abs() < 0.1,
            "ratio {} (lhs {}, rhs {})",
            rep.ratio,
            rep.lhs,
            rep.rhs
        );
    }
}
