//! Parametric description of one captured scene: the film sheet's analytic
//! deformation, the camera and the light.

use crate::error::{Error, Result};

/// One sinusoidal term of the sheet's height field,
/// `z += amplitude * sin(2*pi*freq*(direction . (u, v)) + phase)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    /// Height in texture units (the sheet side is 1).
    pub amplitude: f64,
    /// Cycles per texture unit.
    pub freq: f64,
    /// Radians.
    pub phase: f64,
    /// Unit 2-vector in UV space.
    pub direction: [f64; 2],
}

/// Pinhole camera at the origin looking along +z; the sheet sits `distance`
/// in front of it.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels, image coordinates.
    pub principal: [f64; 2],
    /// Sheet standoff along the optical axis.
    pub distance: f64,
}

/// Directional light plus an ambient floor. `direction` points from the
/// surface toward the light.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Light {
    pub direction: [f64; 3],
    pub ambient: f64,
    pub diffuse: f64,
}

/// Full scene parameterization. Identical parameters and seed reproduce a
/// bundle bit for bit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpParams {
    pub sine_terms: Vec<SineTerm>,
    /// Cylindrical bend about the sheet's v-axis, curvature in 1/length.
    pub curl: f64,
    /// Rigid rotation, radians about x, y, z applied in that order.
    pub rotation: [f64; 3],
    /// Rigid translation after rotation.
    pub translation: [f64; 3],
    pub camera: Camera,
    pub light: Light,
    /// Scene color behind the sheet, RGB in `[0, 1]`.
    pub background: [f64; 3],
}

/// Conservative height-field slope bound; keeps the bent sheet free of depth
/// self-intersections.
pub const MAX_SLOPE: f64 = 1.0;

impl WarpParams {
    /// A flat, front-parallel, ambient-lit scene; the baseline every test
    /// perturbs from. `focal = distance * out_w` makes the unit sheet fill an
    /// `out_w`-wide frame exactly.
    pub fn flat(out_h: usize, out_w: usize) -> WarpParams {
        let distance = 2.5;
        WarpParams {
            sine_terms: vec![],
            curl: 0.0,
            rotation: [0.0; 3],
            translation: [0.0; 3],
            camera: Camera {
                focal: distance * out_w as f64,
                principal: [out_w as f64 / 2.0, out_h as f64 / 2.0],
                distance,
            },
            light: Light { direction: [0.0, 0.0, -1.0], ambient: 1.0, diffuse: 0.0 },
            background: [0.2, 0.25, 0.3],
        }
    }

    /// Check every stated bound and normalize the direction vectors.
    pub fn validate(&mut self) -> Result<()> {
        for (idx, term) in self.sine_terms.iter_mut().enumerate() {
            let norm = (term.direction[0].powi(2) + term.direction[1].powi(2)).sqrt();
            if norm < 1e-12 {
                return Err(Error::Argument(format!("sine term {idx} has a zero direction")));
            }
            term.direction[0] /= norm;
            term.direction[1] /= norm;
            if term.freq <= 0.0 {
                return Err(Error::Argument(format!("sine term {idx} frequency must be positive")));
            }
        }
        let slope = self.max_slope();
        if slope >= MAX_SLOPE {
            return Err(Error::Argument(format!(
                "height-field slope bound violated: {slope:.3} >= {MAX_SLOPE}"
            )));
        }
        let ln = self.light.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ln < 1e-12 {
            return Err(Error::Argument("light direction must be nonzero".into()));
        }
        for v in &mut self.light.direction {
            *v /= ln;
        }
        if !(0.0..=1.0).contains(&self.light.ambient) || !(0.0..=1.0).contains(&self.light.diffuse) {
            return Err(Error::Argument("light ambient/diffuse outside [0, 1]".into()));
        }
        if self.background.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("background color outside [0, 1]".into()));
        }
        if self.camera.focal <= 0.0 || self.camera.distance <= 0.0 {
            return Err(Error::Argument("camera focal and distance must be positive".into()));
        }
        Ok(())
    }

    /// Worst-case height-field gradient magnitude.
    pub fn max_slope(&self) -> f64 {
        self.sine_terms
            .iter()
            .map(|t| t.amplitude.abs() * 2.0 * std::f64::consts::PI * t.freq)
            .sum()
    }

    /// Height field before bending and rigid motion.
    pub fn height(&self, u: f64, v: f64) -> f64 {
        self.sine_terms
            .iter()
            .map(|t| {
                let along = t.direction[0] * u + t.direction[1] * v;
                t.amplitude * (2.0 * std::f64::consts::PI * t.freq * along + t.phase).sin()
            })
            .sum()
    }

    /// Names accepted by [`WarpParams::set_named`] and the warp fitter.
    pub fn named_fields(&self) -> Vec<String> {
        let mut names = vec![
            "curl".into(),
            "rot_x".into(),
            "rot_y".into(),
            "rot_z".into(),
            "trans_x".into(),
            "trans_y".into(),
            "trans_z".into(),
            "distance".into(),
            "focal".into(),
        ];
        for idx in 0..self.sine_terms.len() {
            names.push(format!("sine{idx}_amp"));
            names.push(format!("sine{idx}_freq"));
            names.push(format!("sine{idx}_phase"));
        }
        names
    }

    pub fn get_named(&self, name: &str) -> Result<f64> {
        self.slot(name).map(|(v, _)| v)
    }

    pub fn set_named(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "curl" => self.curl = value,
            "rot_x" => self.rotation[0] = value,
            "rot_y" => self.rotation[1] = value,
            "rot_z" => self.rotation[2] = value,
            "trans_x" => self.translation[0] = value,
            "trans_y" => self.translation[1] = value,
            "trans_z" => self.translation[2] = value,
            "distance" => self.camera.distance = value,
            "focal" => self.camera.focal = value,
            _ => {
                let (idx, field) = parse_sine_name(name)?;
                let term = self.sine_terms.get_mut(idx).ok_or_else(|| {
                    Error::Argument(format!("no sine term {idx} in the parameter set"))
                })?;
                match field {
                    "amp" => term.amplitude = value,
                    "freq" => term.freq = value,
                    "phase" => term.phase = value,
                    _ => unreachable!(),
                }
            }
        }
        Ok(())
    }

    fn slot(&self, name: &str) -> Result<(f64, ())> {
        let v = match name {
            "curl" => self.curl,
            "rot_x" => self.rotation[0],
            "rot_y" => self.rotation[1],
            "rot_z" => self.rotation[2],
            "trans_x" => self.translation[0],
            "trans_y" => self.translation[1],
            "trans_z" => self.translation[2],
            "distance" => self.camera.distance,
            "focal" => self.camera.focal,
            _ => {
                let (idx, field) = parse_sine_name(name)?;
                let term = self.sine_terms.get(idx).ok_or_else(|| {
                    Error::Argument(format!("no sine term {idx} in the parameter set"))
                })?;
                match field {
                    "amp" => term.amplitude,
                    "freq" => term.freq,
                    "phase" => term.phase,
                    _ => unreachable!(),
                }
            }
        };
        Ok((v, ()))
    }
}

fn parse_sine_name(name: &str) -> Result<(usize, &'static str)> {
    let rest = name
        .strip_prefix("sine")
        .ok_or_else(|| Error::Argument(format!("unknown warp parameter '{name}'")))?;
    for field in ["amp", "freq", "phase"] {
        if let Some(idx) = rest.strip_suffix(&format!("_{field}")) {
            let idx = idx
                .parse::<usize>()
                .map_err(|_| Error::Argument(format!("unknown warp parameter '{name}'")))?;
            return Ok((idx, field));
        }
    }
    Err(Error::Argument(format!("unknown warp parameter '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_bound_enforced() {
        let mut p = WarpParams::flat(64, 64);
        p.sine_terms = vec![SineTerm {
            amplitude: 0.5,
            freq: 1.0,
            phase: 0.0,
            direction: [1.0, 0.0],
        }];
        assert!(p.validate().is_err()); // 0.5 * 2pi > 1
        p.sine_terms[0].amplitude = 0.05;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn named_round_trip() {
        let mut p = WarpParams::flat(64, 64);
        p.sine_terms = vec![SineTerm { amplitude: 0.03, freq: 1.0, phase: 0.2, direction: [1.0, 0.0] }];
        for name in p.named_fields() {
            let v = p.get_named(&name).unwrap();
            p.set_named(&name, v + 0.125).unwrap();
            assert_eq!(p.get_named(&name).unwrap(), v + 0.125);
        }
        assert!(p.get_named("bogus").is_err());
        assert!(p.set_named("sine7_amp", 0.0).is_err());
    }
}
