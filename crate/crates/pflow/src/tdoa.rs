//! 3-D TDOA measurement model, Jacobians, and synthetic data generation
//! with clutter and missed detections.
//!
//! A *sensor* is a pair of receivers; its measurement is the time difference
//! of arrival `h(x) = (‖x − p_a‖ − ‖x − p_b‖)/c` in seconds, whose
//! iso-surfaces are hyperboloids.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::flow::ScalarMeasurementModel;

/// Minimum distance (meters) from a receiver at which the Jacobian is
/// defined; linearization points inside this ball are nudged outward.
const JACOBIAN_EPS_M: f64 = 1e-6;

/// Receiver positions and the receiver pairs acting as TDOA sensors.
#[derive(Debug, Clone)]
pub struct SensorGeometry {
    pub receivers: Vec<Vector3<f64>>,
    /// Receiver-index pairs `(a, b)`, one per sensor.
    pub sensors: Vec<(usize, usize)>,
    /// Propagation speed in m/s.
    pub c: f64,
}

impl SensorGeometry {
    pub fn new(
        receivers: Vec<Vector3<f64>>,
        sensors: Vec<(usize, usize)>,
        c: f64,
    ) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid(format!(
                "propagation speed must be positive, got {c}"
            )));
        }
        for &(a, b) in &sensors {
            if a == b {
                return Err(Error::invalid(format!(
                    "sensor pair ({a}, {b}) uses the same receiver twice"
                )));
            }
            if a >= receivers.len() || b >= receivers.len() {
                return Err(Error::invalid(format!(
                    "sensor pair ({a}, {b}) out of range for {} receivers",
                    receivers.len()
                )));
            }
        }
        Ok(Self {
            receivers,
            sensors,
            c,
        })
    }

    /// Default topology: six receivers at the face centers of the ROI cube
    /// `[-halfwidth, halfwidth]³` and nine receiver pairs — the three
    /// opposite-face pairs plus six adjacent pairs.
    pub fn cube_face_centers(halfwidth: f64, c: f64) -> Result<Self> {
        let h = halfwidth;
        let receivers = vec![
            Vector3::new(h, 0.0, 0.0),
            Vector3::new(-h, 0.0, 0.0),
            Vector3::new(0.0, h, 0.0),
            Vector3::new(0.0, -h, 0.0),
            Vector3::new(0.0, 0.0, h),
            Vector3::new(0.0, 0.0, -h),
        ];
        let sensors = default_sensor_pairs();
        Self::new(receivers, sensors, c)
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Receiver separation ‖p_a − p_b‖ of a sensor, in meters.
    pub fn baseline(&self, sensor: usize) -> f64 {
        let (a, b) = self.sensors[sensor];
        (self.receivers[a] - self.receivers[b]).norm()
    }

    /// Half-width `d/c` of the feasible TDOA interval of a sensor, seconds.
    pub fn support_halfwidth(&self, sensor: usize) -> f64 {
        self.baseline(sensor) / self.c
    }

    /// The scalar measurement model of one sensor.
    pub fn sensor_model(&self, sensor: usize, sigma_v: f64) -> TdoaSensorModel {
        let (a, b) = self.sensors[sensor];
        TdoaSensorModel {
            receiver_a: self.receivers[a],
            receiver_b: self.receivers[b],
            c: self.c,
            noise_var: sigma_v * sigma_v,
        }
    }
}

/// The nine default receiver pairs over six cube-face receivers.
pub fn default_sensor_pairs() -> Vec<(usize, usize)> {
    vec![
        (0, 1),
        (2, 3),
        (4, 5),
        (0, 2),
        (0, 4),
        (2, 4),
        (1, 3),
        (1, 5),
        (3, 5),
    ]
}

fn as_vector3(x: &DVector<f64>) -> Result<Vector3<f64>> {
    if x.len() != 3 {
        return Err(Error::dimension(format!(
            "TDOA state must be 3-D, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "TDOA state",
        });
    }
    Ok(Vector3::new(x[0], x[1], x[2]))
}

/// Noise-free TDOA of a source at `x` for one sensor, in seconds; bounded
/// by ±‖p_a − p_b‖/c.
pub fn tdoa_predict(x: &DVector<f64>, sensor: usize, geometry: &SensorGeometry) -> Result<f64> {
    let p = as_vector3(x)?;
    let (a, b) = geometry.sensors[sensor];
    Ok(((p - geometry.receivers[a]).norm() - (p - geometry.receivers[b]).norm()) / geometry.c)
}

/// 1×3 Jacobian of [`tdoa_predict`]:
/// `(1/c)(u_aᵀ − u_bᵀ)` with `u_i` the unit vectors from receiver `i` to `x`.
///
/// Errors within [`JACOBIAN_EPS_M`] of a receiver; callers regularize by
/// shifting the linearization point.
pub fn tdoa_jacobian(
    x: &DVector<f64>,
    sensor: usize,
    geometry: &SensorGeometry,
) -> Result<DMatrix<f64>> {
    let p = as_vector3(x)?;
    let (a, b) = geometry.sensors[sensor];
    let da = p - geometry.receivers[a];
    let db = p - geometry.receivers[b];
    if da.norm() <= JACOBIAN_EPS_M || db.norm() <= JACOBIAN_EPS_M {
        return Err(Error::Singular {
            context: "TDOA Jacobian at a receiver",
        });
    }
    let row = (da.normalize() - db.normalize()) / geometry.c;
    Ok(DMatrix::from_row_slice(1, 3, row.as_slice()))
}

/// One sensor's measurement model, usable by the flow machinery.
#[derive(Debug, Clone, Copy)]
pub struct TdoaSensorModel {
    receiver_a: Vector3<f64>,
    receiver_b: Vector3<f64>,
    c: f64,
    noise_var: f64,
}

impl ScalarMeasurementModel for TdoaSensorModel {
    fn predict(&self, x: &DVector<f64>) -> f64 {
        let p = Vector3::new(x[0], x[1], x[2]);
        ((p - self.receiver_a).norm() - (p - self.receiver_b).norm()) / self.c
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = as_vector3(x)?;
        let da = p - self.receiver_a;
        let db = p - self.receiver_b;
        if da.norm() <= JACOBIAN_EPS_M || db.norm() <= JACOBIAN_EPS_M {
            return Err(Error::Singular {
                context: "TDOA Jacobian at a receiver",
            });
        }
        let row = (da.normalize() - db.normalize()) / self.c;
        Ok(DMatrix::from_row_slice(1, 3, row.as_slice()))
    }

    fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn support_halfwidth(&self) -> f64 {
        (self.receiver_a - self.receiver_b).norm() / self.c
    }

    fn linearize(&self, z: f64, x_lin: &DVector<f64>) -> Result<crate::flow::LinearizedModel> {
        // Regularize linearization points that sit on a receiver by nudging
        // them away; the direction is away from the offending receiver when
        // defined, otherwise a fixed axis.
        let mut point = x_lin.clone();
        if self.jacobian(&point).is_err() {
            let p = as_vector3(&point)?;
            let near = if (p - self.receiver_a).norm() <= JACOBIAN_EPS_M {
                self.receiver_a
            } else {
                self.receiver_b
            };
            let away = p - near;
            let dir = if away.norm() > 0.0 {
                away.normalize()
            } else {
                Vector3::new(1.0, 0.0, 0.0)
            };
            let shifted = p + dir * 1e-3;
            point = DVector::from_column_slice(shifted.as_slice());
        }
        let h = self.jacobian(&point)?;
        let offset = DVector::from_element(1, self.predict(&point)) - &h * &point;
        crate::flow::LinearizedModel::new(
            h,
            DMatrix::from_element(1, 1, self.noise_var),
            DVector::from_element(1, z),
            point,
            offset,
        )
    }
}

/// Scenario description: ground truth, noise, detection and clutter
/// statistics, and sampling budgets.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// ROI is the axis-aligned cube `[-roi_halfwidth, roi_halfwidth]³`, m.
    pub roi_halfwidth: f64,
    /// True source positions, m.
    pub sources: Vec<Vector3<f64>>,
    /// TDOA noise standard deviation, s.
    pub sigma_v: f64,
    /// Detection probability per (source, sensor).
    pub p_d: f64,
    /// Mean clutter count per sensor (Poisson).
    pub mu_c: f64,
    /// Mixture size.
    pub n_g: usize,
    /// Samples per mixture component.
    pub n_p: usize,
    /// Master seed.
    pub seed: u64,
    /// OSPA cutoff (m) and order used by the harness.
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            roi_halfwidth: 1000.0,
            sources: vec![
                Vector3::new(350.0, -450.0, 200.0),
                Vector3::new(-600.0, 150.0, -300.0),
                Vector3::new(50.0, 650.0, -550.0),
            ],
            sigma_v: 0.5e-3,
            p_d: 0.95,
            mu_c: 1.0,
            n_g: 100,
            n_p: 5000,
            seed: 1,
            ospa_cutoff: 30.0,
            ospa_order: 2.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return Err(Error::invalid(format!(
                "scenario.p_d must be in (0, 1], got {}",
                self.p_d
            )));
        }
        if !(self.mu_c >= 0.0) {
            return Err(Error::invalid(format!(
                "scenario.mu_c must be >= 0, got {}",
                self.mu_c
            )));
        }
        if !(self.sigma_v > 0.0) {
            return Err(Error::invalid(format!(
                "scenario.sigma_v must be > 0, got {}",
                self.sigma_v
            )));
        }
        if !(self.roi_halfwidth > 0.0) {
            return Err(Error::invalid(format!(
                "scenario.roi_halfwidth must be > 0, got {}",
                self.roi_halfwidth
            )));
        }
        if self.n_g == 0 || self.n_p == 0 {
            return Err(Error::invalid(format!(
                "scenario.n_g and scenario.n_p must be >= 1, got ({}, {})",
                self.n_g, self.n_p
            )));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.amax() > self.roi_halfwidth {
                return Err(Error::invalid(format!(
                    "scenario.sources[{i}] lies outside the ROI cube"
                )));
            }
        }
        Ok(())
    }
}

/// Unlabeled TDOA measurements, grouped per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub per_sensor: Vec<Vec<f64>>,
}

impl MeasurementSet {
    pub fn total(&self) -> usize {
        self.per_sensor.iter().map(Vec::len).sum()
    }
}

/// Generates one synthetic measurement set: per sensor, each source is
/// detected with probability `p_d` (adding `h(x) + v`, `v ~ N(0, σ_v²)`),
/// clutter counts are Poisson(`mu_c`) with values uniform over the feasible
/// interval `[-d/c, d/c]`, and the merged list is shuffled so measurement
/// origins are not recoverable from ordering.
pub fn generate_measurements(
    config: &ScenarioConfig,
    geometry: &SensorGeometry,
    rng: &mut impl Rng,
) -> Result<MeasurementSet> {
    config.validate()?;
    let noise = Normal::new(0.0, config.sigma_v)
        .map_err(|_| Error::invalid(format!("bad sigma_v {}", config.sigma_v)))?;
    let clutter_count = if config.mu_c > 0.0 {
        Some(Poisson::new(config.mu_c).map_err(|_| {
            Error::invalid(format!("bad clutter mean {}", config.mu_c))
        })?)
    } else {
        None
    };

    let mut per_sensor = Vec::with_capacity(geometry.num_sensors());
    for sensor in 0..geometry.num_sensors() {
        let mut measurements = Vec::new();
        for source in &config.sources {
            if rng.random_bool(config.p_d) {
                let x = DVector::from_column_slice(source.as_slice());
                let z = tdoa_predict(&x, sensor, geometry)? + noise.sample(rng);
                measurements.push(z);
            }
        }
        if let Some(poisson) = &clutter_count {
            let count = poisson.sample(rng) as usize;
            let half = geometry.support_halfwidth(sensor);
            for _ in 0..count {
                measurements.push(rng.random_range(-half..=half));
            }
        }
        measurements.shuffle(rng);
        per_sensor.push(measurements);
    }
    Ok(MeasurementSet { per_sensor })
}
