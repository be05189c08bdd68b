//! Classical fixed-step fourth-order Runge-Kutta for linear complex systems.

use num_complex::Complex64;

/// A linear map y ↦ dy/dt over a flat complex state vector.
pub trait LinearRhs {
    fn dimension(&self) -> usize;

    /// Overwrite `out` with the time derivative at `input`.
    fn apply(&self, input: &[Complex64], out: &mut [Complex64]);
}

/// Scratch buffers for RK4 steps of a fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    slope: Vec<Complex64>,
    stage: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl Rk4 {
    pub fn new(dimension: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            slope: vec![zero; dimension],
            stage: vec![zero; dimension],
            acc: vec![zero; dimension],
        }
    }

    /// Advance `y` by one step of size `dt`.
    pub fn step<F: LinearRhs + ?Sized>(&mut self, rhs: &F, y: &mut [Complex64], dt: f64) {
        assert_eq!(y.len(), self.slope.len(), "state dimension changed between steps");

        // k1
        rhs.apply(y, &mut self.slope);
        for ((acc, stage), (&yi, &k)) in self.acc.iter_mut().zip(self.stage.iter_mut()).zip(y.iter().zip(&self.slope)) {
            *acc = yi + k * (dt / 6.0);
            *stage = yi + k * (dt / 2.0);
        }

        // k2
        rhs.apply(&self.stage, &mut self.slope);
        for ((acc, stage), (&yi, &k)) in self.acc.iter_mut().zip(self.stage.iter_mut()).zip(y.iter().zip(&self.slope)) {
            *acc += k * (dt / 3.0);
            *stage = yi + k * (dt / 2.0);
        }

        // k3
        rhs.apply(&self.stage, &mut self.slope);
        for ((acc, stage), (&yi, &k)) in self.acc.iter_mut().zip(self.stage.iter_mut()).zip(y.iter().zip(&self.slope)) {
            *acc += k * (dt / 3.0);
            *stage = yi + k * dt;
        }

        // k4
        rhs.apply(&self.stage, &mut self.slope);
        for ((yi, &acc), &k) in y.iter_mut().zip(&self.acc).zip(&self.slope) {
            *yi = acc + k * (dt / 6.0);
        }
    }
}
