//! Additive regression functions built from a closed library of component
//! shapes with known Hölder constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Univariate building block. Every shape is evaluable on all of [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Constant {
        value: f64,
    },
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `amplitude * sin(2π·frequency·t + phase)`
    Sine {
        amplitude: f64,
        frequency: u32,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * |t - center|^exponent`
    HolderBump {
        amplitude: f64,
        exponent: f64,
        center: f64,
    },
    /// Step function on `levels.len()` equal bins of [0, 1].
    PiecewiseConstant {
        levels: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFunction {
    #[serde(flatten)]
    pub shape: Shape,
    /// Constant added to the shape; centering only ever changes this.
    #[serde(default)]
    pub shift: f64,
}

impl From<Shape> for ComponentFunction {
    fn from(shape: Shape) -> Self {
        Self { shape, shift: 0.0 }
    }
}

impl ComponentFunction {
    pub fn constant(value: f64) -> Self {
        Shape::Constant { value }.into()
    }

    pub fn linear(slope: f64, intercept: f64) -> Self {
        Shape::Linear { slope, intercept }.into()
    }

    pub fn sine(amplitude: f64, frequency: u32, phase: f64) -> Self {
        Shape::Sine {
            amplitude,
            frequency,
            phase,
        }
        .into()
    }

    pub fn holder_bump(amplitude: f64, exponent: f64, center: f64) -> Self {
        Shape::HolderBump {
            amplitude,
            exponent,
            center,
        }
        .into()
    }

    pub fn piecewise_constant(levels: Vec<f64>) -> Self {
        Shape::PiecewiseConstant { levels }.into()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.shape {
            Shape::Sine { frequency, .. } if *frequency == 0 => {
                Err(Error::Validation("sine frequency must be at least 1".into()))
            }
            Shape::HolderBump {
                exponent, center, ..
            } => {
                if !(*exponent > 0.0 && *exponent <= 1.0) {
                    return Err(Error::Validation(format!(
                        "bump exponent {exponent} outside (0, 1]"
                    )));
                }
                if !(0.0..=1.0).contains(center) {
                    return Err(Error::Validation(format!("bump center {center} outside [0, 1]")));
                }
                Ok(())
            }
            Shape::PiecewiseConstant { levels } if levels.is_empty() => {
                Err(Error::Validation("piecewise-constant shape needs levels".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let base = match &self.shape {
            Shape::Constant { value } => *value,
            Shape::Linear { slope, intercept } => intercept + slope * t,
            Shape::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * f64::from(*frequency) * t + phase).sin(),
            Shape::HolderBump {
                amplitude,
                exponent,
                center,
            } => amplitude * (t - center).abs().powf(*exponent),
            Shape::PiecewiseConstant { levels } => {
                let m = levels.len();
                let idx = ((t * m as f64).floor() as isize).clamp(0, m as isize - 1) as usize;
                levels[idx]
            }
        };
        base + self.shift
    }

    /// Interior points where the shape is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::HolderBump { center, .. } => vec![*center],
            Shape::PiecewiseConstant { levels } => {
                let m = levels.len();
                (1..m).map(|i| i as f64 / m as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Exact `sup_{t∈[0,1]} |g(t)|`.
    pub fn sup_abs(&self) -> f64 {
        let s = self.shift;
        match &self.shape {
            Shape::Constant { value } => (value + s).abs(),
            Shape::Linear { slope, intercept } => {
                (intercept + s).abs().max((intercept + slope + s).abs())
            }
            Shape::Sine { amplitude, .. } => amplitude.abs() + s.abs(),
            Shape::HolderBump {
                amplitude,
                exponent,
                center,
            } => {
                let reach = center.max(1.0 - center).powf(*exponent);
                s.abs().max((s + amplitude * reach).abs())
            }
            Shape::PiecewiseConstant { levels } => {
                levels.iter().map(|l| (l + s).abs()).fold(0.0, f64::max)
            }
        }
    }

    /// Analytic upper bound on `sup |g(x)-g(y)| / |x-y|^β` over [0, 1]²;
    /// infinite when the shape is not β-Hölder.
    pub fn holder_seminorm(&self, beta: f64) -> f64 {
        match &self.shape {
            Shape::Constant { .. } => 0.0,
            Shape::Linear { slope, .. } => slope.abs(),
            // |sin u - sin v| <= min(2, |u - v|) <= 2 (|u - v| / 2)^β
            Shape::Sine {
                amplitude,
                frequency,
                ..
            } => 2.0 * amplitude.abs() * (PI * f64::from(*frequency)).powf(beta),
            Shape::HolderBump {
                amplitude, exponent, ..
            } => {
                if beta <= *exponent + 1e-15 {
                    amplitude.abs()
                } else {
                    f64::INFINITY
                }
            }
            Shape::PiecewiseConstant { levels } => {
                if levels.windows(2).all(|w| w[0] == w[1]) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Smallest C for which the component satisfies both Hölder conditions.
    pub fn holder_constant(&self, beta: f64) -> f64 {
        self.sup_abs().max(self.holder_seminorm(beta))
    }
}

/// `g(x) = Σ_ℓ g_ℓ(x_ℓ)` with a declared Hölder class `(C, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFunction {
    pub components: Vec<ComponentFunction>,
    pub holder_c: f64,
    pub holder_beta: f64,
}

impl AdditiveFunction {
    pub fn new(components: Vec<ComponentFunction>, holder_c: f64, holder_beta: f64) -> Result<Self> {
        let g = Self {
            components,
            holder_c,
            holder_beta,
        };
        g.validate()?;
        Ok(g)
    }

    /// Declares the tightest analytic constant for the given β.
    pub fn with_analytic_constant(components: Vec<ComponentFunction>, beta: f64) -> Result<Self> {
        let c = components
            .iter()
            .map(|g| g.holder_constant(beta))
            .fold(0.0, f64::max);
        Self::new(components, c, beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Validation("additive function needs d >= 1 components".into()));
        }
        if !(self.holder_beta > 0.0 && self.holder_beta <= 1.0) {
            return Err(Error::Validation(format!(
                "Hölder exponent {} outside (0, 1]",
                self.holder_beta
            )));
        }
        if !(self.holder_c >= 0.0) || !self.holder_c.is_finite() {
            return Err(Error::Validation(format!(
                "Hölder constant {} must be finite and non-negative",
                self.holder_c
            )));
        }
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        for (coordinate, &value) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Domain { coordinate, value });
            }
        }
        Ok(self.eval_unchecked(x))
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(x)
            .map(|(g, &t)| g.eval(t))
            .sum()
    }

    /// Largest analytic constant over the components at the declared β.
    pub fn analytic_holder_constant(&self) -> f64 {
        self.components
            .iter()
            .map(|g| g.holder_constant(self.holder_beta))
            .fold(0.0, f64::max)
    }

    /// True when every component is provably in the declared class.
    pub fn is_in_declared_class(&self) -> bool {
        self.analytic_holder_constant() <= self.holder_c + 1e-12
    }
}

/// A univariate probability density on [0, 1].
pub trait Density1d {
    fn pdf(&self, t: f64) -> f64;
    /// Interior points where the density is not smooth.
    fn breakpoints(&self) -> Vec<f64>;

    fn total_mass(&self) -> f64 {
        integrate(|t| self.pdf(t), 0.0, 1.0, &self.breakpoints())
    }
}

/// `p(t) = 1 + slope (t - 1/2)`, a density for `|slope| <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDensity {
    pub slope: f64,
}

impl Density1d for LinearDensity {
    fn pdf(&self, t: f64) -> f64 {
        1.0 + self.slope * (t - 0.5)
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// `g = g_0 + Σ_k g_k*` with `∫ g_k* p_k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredDecomposition {
    pub shift_g0: f64,
    pub centered_components: Vec<ComponentFunction>,
}

impl CenteredDecomposition {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.shift_g0
            + self
                .centered_components
                .iter()
                .zip(x)
                .map(|(g, &t)| g.eval(t))
                .sum::<f64>()
    }
}

pub(crate) fn weighted_integral<D: Density1d + ?Sized>(g: &ComponentFunction, p: &D) -> f64 {
    let mut breaks = g.breakpoints();
    breaks.extend(p.breakpoints());
    integrate(|t| g.eval(t) * p.pdf(t), 0.0, 1.0, &breaks)
}

pub fn center_components<D: Density1d>(
    g: &AdditiveFunction,
    marginals: &[D],
) -> Result<CenteredDecomposition> {
    if marginals.len() != g.dim() {
        return Err(Error::Dimension {
            expected: g.dim(),
            found: marginals.len(),
        });
    }
    let mut shift_g0 = 0.0;
    let mut centered_components = Vec::with_capacity(g.dim());
    for (k, (comp, p)) in g.components.iter().zip(marginals).enumerate() {
        let mass = p.total_mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "marginal {k} integrates to {mass}, not 1"
            )));
        }
        let mean = weighted_integral(comp, p);
        shift_g0 += mean;
        let mut centered = comp.clone();
        centered.shift -= mean;
        centered_components.push(centered);
    }
    Ok(CenteredDecomposition {
        shift_g0,
        centered_components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCertificate {
    /// `max(seminorm_emp, sup_emp)`
    pub c_emp: f64,
    pub seminorm_emp: f64,
    pub sup_emp: f64,
    pub ok: bool,
}

/// Grid estimate of the Hölder constant on `grid_size` equispaced points.
pub fn holder_certificate(g: &AdditiveFunction, grid_size: usize) -> HolderCertificate {
    let grid_size = grid_size.max(2);
    let ts: Vec<f64> = (0..grid_size)
        .map(|i| i as f64 / (grid_size - 1) as f64)
        .collect();
    let beta = g.holder_beta;
    let mut seminorm: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for comp in &g.components {
        let vals: Vec<f64> = ts.iter().map(|&t| comp.eval(t)).collect();
        for i in 0..grid_size {
            sup = sup.max(vals[i].abs());
            for j in (i + 1)..grid_size {
                let ratio = (vals[i] - vals[j]).abs() / (ts[j] - ts[i]).powf(beta);
                seminorm = seminorm.max(ratio);
            }
        }
    }
    let slack = 1e-9;
    HolderCertificate {
        c_emp: seminorm.max(sup),
        seminorm_emp: seminorm,
        sup_emp: sup,
        ok: seminorm <= g.holder_c + slack && sup <= g.holder_c + slack,
    }
}

/// Identifier list of the built-in function panel.
pub const PANEL_IDS: [&str; 7] = ["zero", "constant", "linear", "sine", "bump", "mixed", "step"];

/// Built-in test functions in dimension `d`.
pub fn panel_function(id: &str, d: usize) -> Result<AdditiveFunction> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let comps: Vec<ComponentFunction> = match id {
        "zero" => vec![ComponentFunction::constant(0.0); d],
        "constant" => vec![ComponentFunction::constant(0.5); d],
        "linear" => vec![ComponentFunction::linear(1.0, 0.0); d],
        "sine" => (0..d)
            .map(|k| ComponentFunction::sine(1.0, 1, 0.5 * k as f64))
            .collect(),
        "bump" => vec![ComponentFunction::holder_bump(1.0, 0.5, 0.5); d],
        "mixed" => (0..d)
            .map(|k| match k % 3 {
                0 => ComponentFunction::sine(1.0, 1, 0.0),
                1 => ComponentFunction::holder_bump(1.0, 0.5, 0.3),
                _ => ComponentFunction::linear(-1.0, 0.5),
            })
            .collect(),
        "step" => vec![ComponentFunction::piecewise_constant(vec![0.5, -0.5, 0.25, -0.25]); d],
        other => return Err(Error::Config(format!("unknown panel function id {other:?}"))),
    };
    let beta = match id {
        "bump" | "mixed" => 0.5,
        _ => 1.0,
    };
    if id == "step" {
        // Not Hölder continuous; declared with its sup bound so it can be used
        // as an element of the histogram space.
        return AdditiveFunction::new(comps, 0.5, 1.0);
    }
    AdditiveFunction::with_analytic_constant(comps, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> LinearDensity {
        LinearDensity { slope: 0.0 }
    }

    #[test]
    fn eval_sum_of_coordinates() {
        let g = AdditiveFunction::new(vec![ComponentFunction::linear(1.0, 0.0); 2], 1.0, 1.0).unwrap();
        assert!((g.eval(&[0.25, 0.5]).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn eval_zero_function() {
        let g = panel_function("zero", 3).unwrap();
        assert_eq!(g.eval(&[0.1, 0.9, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn eval_matches_per_component_sum() {
        let comps = vec![
            ComponentFunction::sine(1.0, 1, 0.0),
            ComponentFunction::holder_bump(1.0, 0.5, 0.5),
        ];
        let g = AdditiveFunction::with_analytic_constant(comps, 0.5).unwrap();
        let brute = (2.0 * PI * 0.25).sin() + (0.0_f64 - 0.5).abs().sqrt();
        assert!((g.eval(&[0.25, 0.0]).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_out_of_cube() {
        let g = panel_function("linear", 2).unwrap();
        assert!(matches!(g.eval(&[0.5, 1.2]), Err(Error::Domain { coordinate: 1, .. })));
    }

    #[test]
    fn rejects_beta_above_one() {
        let r = AdditiveFunction::new(vec![ComponentFunction::constant(1.0)], 1.0, 1.5);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn centering_uniform_linear() {
        let g = panel_function("linear", 1).unwrap();
        let dec = center_components(&g, &[uniform()]).unwrap();
        assert!((dec.shift_g0 - 0.5).abs() < 1e-14);
        assert!((dec.centered_components[0].eval(0.8) - 0.3).abs() < 1e-14);
    }

    #[test]
    fn centering_constants() {
        let comps = vec![
            ComponentFunction::constant(1.5),
            ComponentFunction::constant(-0.25),
            ComponentFunction::constant(2.0),
        ];
        let g = AdditiveFunction::with_analytic_constant(comps, 1.0).unwrap();
        let dec = center_components(&g, &[uniform(); 3]).unwrap();
        assert!((dec.shift_g0 - 3.25).abs() < 1e-14);
        for c in &dec.centered_components {
            assert!(c.eval(0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn centering_triangular_marginal() {
        // ∫ t · 2t dt = 2/3
        let g = panel_function("linear", 1).unwrap();
        let dec = center_components(&g, &[LinearDensity { slope: 2.0 }]).unwrap();
        assert!((dec.shift_g0 - 2.0 / 3.0).abs() < 1e-14);
        assert!((dec.centered_components[0].eval(1.0) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn centering_rejects_unnormalized() {
        struct Bad;
        impl Density1d for Bad {
            fn pdf(&self, _: f64) -> f64 {
                1.1
            }
            fn breakpoints(&self) -> Vec<f64> {
                Vec::new()
            }
        }
        let g = panel_function("linear", 1).unwrap();
        assert!(matches!(center_components(&g, &[Bad]), Err(Error::Validation(_))));
    }

    #[test]
    fn centering_reproduces_g_on_grid() {
        let dens = [LinearDensity { slope: 1.0 }, LinearDensity { slope: -0.5 }];
        for id in PANEL_IDS {
            let g = panel_function(id, 2).unwrap();
            let dec = center_components(&g, &dens).unwrap();
            for (k, comp) in dec.centered_components.iter().enumerate() {
                assert!(weighted_integral(comp, &dens[k]).abs() < 1e-12, "{id}");
            }
            for i in 0..1000 {
                let x = [i as f64 / 999.0, 1.0 - i as f64 / 999.0];
                assert!((dec.eval(&x) - g.eval(&x).unwrap()).abs() < 1e-10, "{id}");
            }
        }
    }

    #[test]
    fn certificate_linear_slope_one() {
        let g = panel_function("linear", 1).unwrap();
        let cert = holder_certificate(&g, 101);
        assert!(cert.c_emp <= 1.0 + 1e-12);
        assert!(cert.ok);
    }

    #[test]
    fn certificate_sine() {
        let g = AdditiveFunction::new(vec![ComponentFunction::sine(1.0, 1, 0.0)], 2.0 * PI, 1.0).unwrap();
        let cert = holder_certificate(&g, 400);
        assert!(cert.ok);
        assert!(cert.seminorm_emp > 6.0);
    }

    #[test]
    fn certificate_detects_violation() {
        let g = AdditiveFunction::new(vec![ComponentFunction::linear(2.0, 0.0)], 1.0, 1.0).unwrap();
        assert!(!holder_certificate(&g, 50).ok);
    }

    #[test]
    fn certificate_monotone_on_nested_grids_and_below_analytic() {
        for id in ["linear", "sine", "bump", "mixed"] {
            let g = panel_function(id, 3).unwrap();
            let mut prev = 0.0;
            for p in 1..8 {
                let cert = holder_certificate(&g, (1 << p) + 1);
                assert!(cert.c_emp >= prev - 1e-15, "{id}");
                assert!(cert.c_emp <= g.analytic_holder_constant() + 1e-9, "{id}");
                prev = cert.c_emp;
            }
        }
    }

    #[test]
    fn panel_declares_valid_classes() {
        for id in PANEL_IDS {
            let g = panel_function(id, 4).unwrap();
            assert_eq!(g.is_in_declared_class(), id != "step", "{id}");
        }
    }

    #[test]
    fn component_json_shape() {
        let c: ComponentFunction =
            serde_json::from_str(r#"{"kind":"sine","amplitude":1.0,"frequency":2}"#).unwrap();
        assert_eq!(c, ComponentFunction::sine(1.0, 2, 0.0));
    }
}
