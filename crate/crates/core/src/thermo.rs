//! Psychrometrics: relative humidity from dew point and wet-bulb temperature
//! by safeguarded Newton-Raphson iteration.
//!
//! The wet-bulb temperature `Tw` is the root of
//!
//! ```text
//! f(Tw) = Tw - Ta + (Lv/Cp)·ε·A·( 1/(P·exp(B/Tw) - A) - RH/(P·exp(B/Ta) - A) )
//! ```
//!
//! with `A = 2.53e9 mb` and `B = 5420 K`. `f` is strictly increasing in `Tw`
//! and `f(Ta) = (1 - RH)·(…) ≥ 0`, so the root lies at or below `Ta`.

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychroConstants {
    /// Latent heat of vaporization, J/kg.
    pub latent_heat: f64,
    /// Specific heat of dry air at constant pressure, J/(kg·K).
    pub specific_heat: f64,
    /// Ratio of dry-air to water-vapour gas constants.
    pub gas_ratio: f64,
    /// Saturation vapour pressure scale, mb.
    pub a: f64,
    /// Saturation vapour pressure temperature scale, K.
    pub b: f64,
}

impl Default for PsychroConstants {
    fn default() -> Self {
        Self {
            latent_heat: 2.501e6,
            specific_heat: 1005.0,
            gas_ratio: 0.622,
            a: 2.53e9,
            b: 5420.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ThermoError {
    #[error("non-physical state: {0}")]
    NonPhysical(&'static str),
    #[error("wet-bulb iteration did not converge: last iterate {last} K, residual {residual} K")]
    NoConvergence { last: f64, residual: f64 },
}

/// Near-surface air state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtmosState {
    t_air: f64,
    rh: f64,
    pressure: f64,
}

impl AtmosState {
    /// `t_air` in K, `rh` as a fraction in (0, 1], `pressure` in mb.
    pub fn new(t_air: f64, rh: f64, pressure: f64) -> Result<Self, ThermoError> {
        if !(t_air > 150.0) {
            return Err(ThermoError::NonPhysical("air temperature must exceed 150 K"));
        }
        if !(rh > 0.0 && rh <= 1.0) {
            return Err(ThermoError::NonPhysical("relative humidity must be in (0, 1]"));
        }
        if !(pressure > 100.0) {
            return Err(ThermoError::NonPhysical("pressure must exceed 100 mb"));
        }
        Ok(Self {
            t_air,
            rh,
            pressure,
        })
    }

    /// State from dew point; a dew point above the air temperature is
    /// clamped to saturation and reported through the returned flag.
    pub fn from_dewpoint(t_air: f64, t_dew: f64, pressure: f64) -> Result<(Self, bool), ThermoError> {
        let h = rh_from_dewpoint(t_air, t_dew)?;
        Ok((Self::new(t_air, h.rh, pressure)?, h.clamped))
    }

    pub fn t_air(&self) -> f64 {
        self.t_air
    }
    pub fn rh(&self) -> f64 {
        self.rh
    }
    pub fn pressure(&self) -> f64 {
        self.pressure
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Humidity {
    pub rh: f64,
    /// Dew point exceeded air temperature; `rh` was clamped to 1.
    pub clamped: bool,
}

const DEW_OFFSET: f64 = 32.19;
const TRIPLE_POINT: f64 = 273.16;

/// Raw dew-point humidity expression, without clamping.
pub fn rh_formula(t_air: f64, t_dew: f64) -> f64 {
    let term = |t: f64| (t - TRIPLE_POINT) / (t - DEW_OFFSET);
    (17.502 * (term(t_dew) - term(t_air))).exp()
}

/// Relative humidity (fraction) from air and dew-point temperature in K.
pub fn rh_from_dewpoint(t_air: f64, t_dew: f64) -> Result<Humidity, ThermoError> {
    if !(t_air.is_finite() && t_dew.is_finite()) || t_air <= DEW_OFFSET || t_dew <= DEW_OFFSET {
        return Err(ThermoError::NonPhysical(
            "temperatures must be finite and above 32.19 K",
        ));
    }
    if t_dew > t_air {
        return Ok(Humidity {
            rh: 1.0,
            clamped: true,
        });
    }
    Ok(Humidity {
        rh: rh_formula(t_air, t_dew),
        clamped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Residual tolerance in K.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower end of the search bracket, in K below the air temperature.
    pub bracket_depth: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            bracket_depth: 60.0,
        }
    }
}

/// Residual of the wet-bulb relation and its derivative with respect to `tw`.
#[derive(Debug, Clone, Copy)]
pub struct WetBulbResidual {
    state: AtmosState,
    scale: f64,
    ambient: f64,
    c: PsychroConstants,
}

impl WetBulbResidual {
    pub fn new(state: AtmosState, c: PsychroConstants) -> Self {
        let scale = c.latent_heat / c.specific_heat * c.gas_ratio * c.a;
        let ambient = state.rh / (state.pressure * (c.b / state.t_air).exp() - c.a);
        Self {
            state,
            scale,
            ambient,
            c,
        }
    }

    pub fn value(&self, tw: f64) -> f64 {
        let denom = self.state.pressure * (self.c.b / tw).exp() - self.c.a;
        tw - self.state.t_air + self.scale * (1.0 / denom - self.ambient)
    }

    pub fn derivative(&self, tw: f64) -> f64 {
        let pe = self.state.pressure * (self.c.b / tw).exp();
        let denom = pe - self.c.a;
        1.0 + self.scale * pe * self.c.b / (tw * tw * denom * denom)
    }
}

/// Wet-bulb temperature in K with the default constants.
pub fn wet_bulb(state: &AtmosState, settings: &SolverSettings) -> Result<f64, ThermoError> {
    wet_bulb_with(state, settings, &PsychroConstants::default())
}

pub fn wet_bulb_with(
    state: &AtmosState,
    settings: &SolverSettings,
    constants: &PsychroConstants,
) -> Result<f64, ThermoError> {
    let f = WetBulbResidual::new(*state, *constants);
    let mut hi = state.t_air;
    let mut lo = state.t_air - settings.bracket_depth;
    let mut tw = hi;
    let mut r = f.value(tw);
    if r.abs() < settings.tol {
        return Ok(tw);
    }
    if !(f.value(lo) < 0.0) {
        return Err(ThermoError::NoConvergence {
            last: tw,
            residual: r,
        });
    }
    for _ in 0..settings.max_iter {
        if r > 0.0 {
            hi = tw;
        } else {
            lo = tw;
        }
        let step = tw - r / f.derivative(tw);
        tw = if step > lo && step < hi && step.is_finite() {
            step
        } else {
            0.5 * (lo + hi)
        };
        r = f.value(tw);
        if r.abs() < settings.tol {
            return Ok(tw);
        }
    }
    Err(ThermoError::NoConvergence {
        last: tw,
        residual: r,
    })
}

/// Humidity input for [`wet_bulb_field`].
#[derive(Debug, Clone, Copy)]
pub enum HumidityField<'a> {
    /// Relative humidity as a fraction.
    Relative(&'a GridField),
    /// Dew-point temperature in K.
    Dewpoint(&'a GridField),
}

impl HumidityField<'_> {
    fn field(&self) -> &GridField {
        match self {
            HumidityField::Relative(f) | HumidityField::Dewpoint(f) => f,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WetBulbStats {
    /// Pixels where dew point exceeded air temperature and humidity was clamped.
    pub clamped: usize,
    /// Pixels with finite but non-physical inputs, set to NaN.
    pub invalid: usize,
    /// Pixels where the solver failed, set to NaN.
    pub unconverged: usize,
}

/// Pointwise wet-bulb temperature over matching fields. Pressure is in mb.
pub fn wet_bulb_field(
    t_air: &GridField,
    humidity: HumidityField<'_>,
    pressure: &GridField,
    settings: &SolverSettings,
) -> Result<(GridField, WetBulbStats)> {
    let hum = humidity.field();
    if !t_air.same_shape(hum) || !t_air.same_shape(pressure) {
        return Err(Error::ShapeMismatch(
            "air temperature, humidity and pressure must share grid and time axis".into(),
        ));
    }
    let dewpoint = matches!(humidity, HumidityField::Dewpoint(_));
    let mut out = Array3::<f32>::zeros(t_air.values().dim());
    // 0 = ok, 1 = clamped, 2 = invalid, 3 = unconverged
    let mut status = Array3::<u8>::zeros(t_air.values().dim());
    Zip::from(&mut out)
        .and(&mut status)
        .and(t_air.values())
        .and(hum.values())
        .and(pressure.values())
        .par_for_each(|o, st, &ta, &h, &p| {
            if !(ta.is_finite() && h.is_finite() && p.is_finite()) {
                *o = f32::NAN;
                return;
            }
            let (ta, h, p) = (ta as f64, h as f64, p as f64);
            let state = if dewpoint {
                AtmosState::from_dewpoint(ta, h, p)
            } else {
                AtmosState::new(ta, h, p).map(|s| (s, false))
            };
            match state {
                Err(_) => {
                    *o = f32::NAN;
                    *st = 2;
                }
                Ok((s, clamped)) => match wet_bulb(&s, settings) {
                    Ok(tw) => {
                        *o = tw as f32;
                        *st = u8::from(clamped);
                    }
                    Err(_) => {
                        *o = f32::NAN;
                        *st = 3;
                    }
                },
            }
        });
    let mut stats = WetBulbStats::default();
    for s in status.iter() {
        match s {
            1 => stats.clamped += 1,
            2 => stats.invalid += 1,
            3 => stats.unconverged += 1,
            _ => {}
        }
    }
    let field = GridField::new(*t_air.grid(), t_air.times().to_vec(), out, "K", "t_wb")?;
    Ok((field, stats))
}
