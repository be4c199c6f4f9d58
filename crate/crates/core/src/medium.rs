//! Layered Earth models and their random perturbations.
//!
//! A [`LayeredMedium`] is a stack of horizontal layers over a terminal
//! half-space. A [`MaterialSample`] is one draw of density, shear and
//! compressional speed per layer: `vs` and `rho` are uniform on relative
//! intervals around the unperturbed values, and `vp` is uniform on
//! `[nu_lb * vs, nu_ub * vs]` conditional on the drawn `vs`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::SampleKey;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Layer thickness in m; `None` marks the terminal half-space.
    pub thickness: Option<f64>,
    pub rho_bar: f64,
    pub vs_bar: f64,
    pub vp_bar: f64,
    pub q_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerSpec>", into = "Vec<LayerSpec>")]
pub struct LayeredMedium {
    layers: Vec<LayerSpec>,
}

impl LayeredMedium {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("medium needs at least one layer"));
        }
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            match (i == last, l.thickness) {
                (true, Some(_)) => return Err(invalid("last layer must be the half-space")),
                (false, None) => return Err(invalid(format!("layer {} has no thickness", i + 1))),
                (false, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                    return Err(invalid(format!("layer {} thickness must be positive", i + 1)))
                }
                _ => {}
            }
            let positive = [l.rho_bar, l.vs_bar, l.vp_bar, l.q_factor]
                .iter()
                .all(|v| *v > 0.0 && !v.is_nan());
            if !positive {
                return Err(invalid(format!("layer {} has non-positive parameters", i + 1)));
            }
            if l.vp_bar <= l.vs_bar {
                return Err(invalid(format!("layer {} has vp <= vs", i + 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Depths of the interfaces between consecutive layers, top to bottom.
    pub fn interface_depths(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| l.thickness)
            .scan(0.0, |z, t| {
                *z += t;
                Some(*z)
            })
            .collect()
    }

    /// Index of the layer containing depth `z`; interfaces belong to the
    /// deeper layer.
    pub fn layer_index(&self, z: f64) -> usize {
        self.interface_depths()
            .iter()
            .take_while(|&&d| z >= d)
            .count()
    }

    /// The unperturbed material as a sample.
    pub fn nominal(&self) -> MaterialSample {
        MaterialSample {
            rho: self.layers.iter().map(|l| l.rho_bar).collect(),
            vs: self.layers.iter().map(|l| l.vs_bar).collect(),
            vp: self.layers.iter().map(|l| l.vp_bar).collect(),
        }
    }
}

impl TryFrom<Vec<LayerSpec>> for LayeredMedium {
    type Error = crate::Error;

    fn try_from(layers: Vec<LayerSpec>) -> Result<Self> {
        Self::new(layers)
    }
}

impl From<LayeredMedium> for Vec<LayerSpec> {
    fn from(m: LayeredMedium) -> Self {
        m.layers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    /// Relative half-width of the shear-speed interval.
    pub q: f64,
    /// Relative half-width of the density interval.
    pub r: f64,
    pub nu_lb: f64,
    pub nu_ub: f64,
}

impl UncertaintySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.q) || !(0.0..1.0).contains(&self.r) {
            return Err(invalid("q and r must lie in [0, 1)"));
        }
        if !(self.nu_lb > 1.0 && self.nu_lb <= self.nu_ub && self.nu_ub.is_finite()) {
            return Err(invalid("need 1 < nu_lb <= nu_ub"));
        }
        Ok(())
    }

    /// Largest compressional speed any admissible sample can take.
    pub fn vp_upper_bound(&self, medium: &LayeredMedium) -> f64 {
        medium
            .layers()
            .iter()
            .map(|l| (1.0 + self.q) * l.vs_bar * self.nu_ub)
            .fold(0.0, f64::max)
    }

    /// Smallest shear speed any admissible sample can take.
    pub fn vs_lower_bound(&self, medium: &LayeredMedium) -> f64 {
        medium
            .layers()
            .iter()
            .map(|l| (1.0 - self.q) * l.vs_bar)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialSample {
    pub rho: Vec<f64>,
    pub vs: Vec<f64>,
    pub vp: Vec<f64>,
}

impl MaterialSample {
    pub fn len(&self) -> usize {
        self.vs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vs.is_empty()
    }

    pub fn vp_max(&self) -> f64 {
        self.vp.iter().copied().fold(0.0, f64::max)
    }

    /// Checks the sample against the bounds implied by `unc`.
    pub fn within_bounds(&self, medium: &LayeredMedium, unc: &UncertaintySpec) -> bool {
        let eps = 1e-12;
        self.len() == medium.len()
            && medium.layers().iter().enumerate().all(|(i, l)| {
                let (rho, vs, vp) = (self.rho[i], self.vs[i], self.vp[i]);
                [rho, vs, vp].iter().all(|v| v.is_finite() && *v > 0.0)
                    && rho >= (1.0 - unc.r) * l.rho_bar * (1.0 - eps)
                    && rho <= (1.0 + unc.r) * l.rho_bar * (1.0 + eps)
                    && vs >= (1.0 - unc.q) * l.vs_bar * (1.0 - eps)
                    && vs <= (1.0 + unc.q) * l.vs_bar * (1.0 + eps)
                    && vp >= unc.nu_lb * vs * (1.0 - eps)
                    && vp <= unc.nu_ub * vs * (1.0 + eps)
            })
    }

    /// Short stable fingerprint of the sample values.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.rho.iter().chain(&self.vs).chain(&self.vp) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Draws one material sample for `key`.
pub fn sample_material(
    medium: &LayeredMedium,
    unc: &UncertaintySpec,
    key: SampleKey,
) -> Result<MaterialSample> {
    unc.validate()?;
    if medium.is_empty() {
        return Err(invalid("empty medium"));
    }
    let mut rng = key.rng();
    let mut uniform = |lo: f64, hi: f64| lo + rng.random::<f64>() * (hi - lo);
    let n = medium.len();
    let mut vs = Vec::with_capacity(n);
    let mut vp = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    for l in medium.layers() {
        vs.push(uniform((1.0 - unc.q) * l.vs_bar, (1.0 + unc.q) * l.vs_bar));
    }
    for &s in &vs {
        vp.push(uniform(unc.nu_lb * s, unc.nu_ub * s));
    }
    for l in medium.layers() {
        rho.push(uniform((1.0 - unc.r) * l.rho_bar, (1.0 + unc.r) * l.rho_bar));
    }
    Ok(MaterialSample { rho, vs, vp })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMaterial {
    pub rho: f64,
    pub vp: f64,
    pub vs: f64,
    pub q_factor: f64,
}

/// Material of the layer containing depth `z` (m below the free surface).
pub fn material_at_depth(sample: &MaterialSample, medium: &LayeredMedium, z: f64) -> PointMaterial {
    let i = medium.layer_index(z);
    PointMaterial {
        rho: sample.rho[i],
        vp: sample.vp[i],
        vs: sample.vs[i],
        q_factor: medium.layers()[i].q_factor,
    }
}
