//! Forward models composed with a QoI, ready for the sample pool.

use crate::data::DataSet;
use crate::error::Result;
use crate::estimators::SampleModel;
use crate::medium::{sample_material, LayeredMedium, UncertaintySpec};
use crate::qoi::QoiKind;
use crate::rng::SampleKey;
use crate::solver::{measure_work, simulate, Discretization, Geometry, SimOptions, SourceSpec};
use crate::surrogate::SurrogateSpec;

/// The surrogate reporting its simulated work instead of elapsed time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateModel(pub SurrogateSpec);

impl SampleModel for SurrogateModel {
    fn evaluate(&self, key: SampleKey, level: u32) -> Result<(f64, f64)> {
        Ok(self.0.eval(&self.0.draw(key), level))
    }

    fn id(&self) -> String {
        let s = &self.0;
        format!("surrogate(m={},q_w={},gamma={},c_b={},w0={})", s.dim, s.q_w, s.gamma, s.c_b, s.w0)
    }
}

/// Random layered medium, wave solver and misfit against fixed data.
#[derive(Clone, Debug)]
pub struct WaveModel {
    pub medium: LayeredMedium,
    pub uncertainty: UncertaintySpec,
    pub source: SourceSpec,
    pub geometry: Geometry,
    pub discretization: Discretization,
    pub opts: SimOptions,
    pub data: DataSet,
    pub kind: QoiKind,
}

impl SampleModel for WaveModel {
    /// Work is the thread CPU time of the solve and the misfit.
    fn evaluate(&self, key: SampleKey, level: u32) -> Result<(f64, f64)> {
        let sample = sample_material(&self.medium, &self.uncertainty, key)?;
        let lv = self.discretization.level(level);
        let (q, work) = measure_work(|| -> Result<f64> {
            let sim = simulate(&sample, &self.medium, &self.source, &self.geometry, &lv, &self.opts)?;
            self.kind.evaluate(&sim, &self.data)
        });
        Ok((q?, work))
    }

    fn id(&self) -> String {
        format!(
            "wave(qoi={},attenuation={},h0={},dt0={})",
            self.kind.label(),
            self.opts.attenuation,
            self.discretization.h0,
            self.discretization.dt0
        )
    }
}
