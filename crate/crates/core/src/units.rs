//! Unit conversions, the excitonic Hamiltonian and the Drude-Lorentz bath.
//!
//! Inputs arrive in spectroscopic units (cm⁻¹, fs, K). Internally every
//! energy is an angular frequency in rad/fs, which sets ħ = 1 so the
//! hierarchy coefficients need no ħ factors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// speed of light in vacuum (cm s^-1), exact
const SPEED_OF_LIGHT_CM_PER_S: f64 = 2.997_924_58e10;
/// Planck constant (J s), exact
const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant (J K^-1), exact
const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitConstants {
    /// rad fs⁻¹ per cm⁻¹ (2πc with c in cm/fs)
    pub wavenumber_to_angular_frequency: f64,
    /// cm⁻¹ per K (k_B / hc)
    pub boltzmann: f64,
}

impl UnitConstants {
    pub const CODATA: UnitConstants = UnitConstants {
        wavenumber_to_angular_frequency: 2.0
            * std::f64::consts::PI
            * SPEED_OF_LIGHT_CM_PER_S
            * 1e-15,
        boltzmann: BOLTZMANN_J_PER_K / (PLANCK * SPEED_OF_LIGHT_CM_PER_S),
    };
}

/// Convert cm⁻¹ to rad/fs.
pub fn wavenumber_to_rad_per_fs(wavenumber: f64) -> f64 {
    wavenumber * UnitConstants::CODATA.wavenumber_to_angular_frequency
}

/// Convert rad/fs to cm⁻¹.
pub fn rad_per_fs_to_wavenumber(omega: f64) -> f64 {
    omega / UnitConstants::CODATA.wavenumber_to_angular_frequency
}

/// k_B T in cm⁻¹.
pub fn thermal_energy(temperature_k: f64) -> f64 {
    UnitConstants::CODATA.boltzmann * temperature_k
}

/// Single-exciton system: site energies ε_m, couplings J_mn and the
/// reorganization energy λ that shifts every site.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitonModel {
    site_energies_cm: Vec<f64>,
    couplings_cm: DMatrix<f64>,
    reorganization_energy_cm: f64,
}

impl ExcitonModel {
    /// Build a model whose reorganization energy is taken from `bath`, so the
    /// two can never disagree.
    pub fn new(site_energies_cm: Vec<f64>, couplings_cm: DMatrix<f64>, bath: &BathSpec) -> Result<Self> {
        let n = site_energies_cm.len();
        if n == 0 {
            return Err(Error::InvalidModel("at least one site is required".into()));
        }
        if couplings_cm.nrows() != n || couplings_cm.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "coupling matrix is {}x{} but there are {n} sites",
                couplings_cm.nrows(),
                couplings_cm.ncols()
            )));
        }
        if site_energies_cm.iter().chain(couplings_cm.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite energy or coupling".into()));
        }
        for i in 0..n {
            if couplings_cm[(i, i)] != 0.0 {
                return Err(Error::InvalidModel(format!("coupling diagonal entry {i} is nonzero")));
            }
            for j in (i + 1)..n {
                if couplings_cm[(i, j)] != couplings_cm[(j, i)] {
                    return Err(Error::InvalidModel(format!(
                        "coupling matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            site_energies_cm,
            couplings_cm,
            reorganization_energy_cm: bath.reorganization_energy_cm(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.site_energies_cm.len()
    }

    pub fn site_energies_cm(&self) -> &[f64] {
        &self.site_energies_cm
    }

    pub fn couplings_cm(&self) -> &DMatrix<f64> {
        &self.couplings_cm
    }

    pub fn reorganization_energy_cm(&self) -> f64 {
        self.reorganization_energy_cm
    }

    /// H_e/ħ as a real symmetric matrix in rad/fs.
    pub fn hamiltonian_real(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        DMatrix::from_fn(n, n, |i, j| {
            let cm = if i == j {
                self.site_energies_cm[i] + self.reorganization_energy_cm
            } else {
                self.couplings_cm[(i, j)]
            };
            wavenumber_to_rad_per_fs(cm)
        })
    }
}

/// H_e/ħ in rad/fs: diagonal ε_m + λ, off-diagonal J_mn.
pub fn build_hamiltonian(model: &ExcitonModel) -> DMatrix<Complex64> {
    model.hamiltonian_real().map(|x| Complex64::new(x, 0.0))
}

/// Overdamped Drude-Lorentz bath, identical and uncorrelated on every site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    reorganization_energy_cm: f64,
    dissipation_rate_per_fs: f64,
    temperature_k: f64,
}

impl BathSpec {
    pub fn new(reorganization_energy_cm: f64, dissipation_rate_per_fs: f64, temperature_k: f64) -> Result<Self> {
        if !(reorganization_energy_cm.is_finite() && reorganization_energy_cm >= 0.0) {
            return Err(Error::InvalidBath(format!(
                "reorganization energy must be finite and non-negative, got {reorganization_energy_cm}"
            )));
        }
        if !(dissipation_rate_per_fs.is_finite() && dissipation_rate_per_fs > 0.0) {
            return Err(Error::InvalidBath(format!(
                "dissipation rate must be finite and positive, got {dissipation_rate_per_fs}"
            )));
        }
        if !(temperature_k.is_finite() && temperature_k > 0.0) {
            return Err(Error::InvalidBath(format!(
                "temperature must be finite and positive, got {temperature_k}"
            )));
        }
        Ok(Self {
            reorganization_energy_cm,
            dissipation_rate_per_fs,
            temperature_k,
        })
    }

    /// Construct from the bath correlation time τ_c = 1/γ.
    pub fn from_correlation_time(reorganization_energy_cm: f64, tau_c_fs: f64, temperature_k: f64) -> Result<Self> {
        if !(tau_c_fs.is_finite() && tau_c_fs > 0.0) {
            return Err(Error::InvalidBath(format!("correlation time must be positive, got {tau_c_fs}")));
        }
        Self::new(reorganization_energy_cm, 1.0 / tau_c_fs, temperature_k)
    }

    pub fn reorganization_energy_cm(&self) -> f64 {
        self.reorganization_energy_cm
    }

    /// λ in rad/fs.
    pub fn reorganization_energy(&self) -> f64 {
        wavenumber_to_rad_per_fs(self.reorganization_energy_cm)
    }

    /// γ in fs⁻¹.
    pub fn dissipation_rate(&self) -> f64 {
        self.dissipation_rate_per_fs
    }

    pub fn correlation_time_fs(&self) -> f64 {
        1.0 / self.dissipation_rate_per_fs
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    /// k_B T in rad/fs.
    pub fn thermal_energy(&self) -> f64 {
        wavenumber_to_rad_per_fs(thermal_energy(self.temperature_k))
    }

    pub fn with_reorganization_energy(&self, reorganization_energy_cm: f64) -> Result<Self> {
        Self::new(reorganization_energy_cm, self.dissipation_rate_per_fs, self.temperature_k)
    }

    pub fn with_dissipation_rate(&self, dissipation_rate_per_fs: f64) -> Result<Self> {
        Self::new(self.reorganization_energy_cm, dissipation_rate_per_fs, self.temperature_k)
    }
}

/// J(ω) = 2λγω/(ω²+γ²), returned in cm⁻¹ (λ keeps its input unit).
pub fn spectral_density(omega: f64, bath: &BathSpec) -> f64 {
    let gamma = bath.dissipation_rate();
    2.0 * bath.reorganization_energy_cm() * gamma * omega / (omega * omega + gamma * gamma)
}

/// High-temperature correlation amplitude c0 = 2λk_BT − iλγ in rad²/fs².
pub fn c0(bath: &BathSpec) -> Complex64 {
    let lambda = bath.reorganization_energy();
    Complex64::new(
        2.0 * lambda * bath.thermal_energy(),
        -lambda * bath.dissipation_rate(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighTemperatureCheck {
    /// ħγβ
    pub ratio: f64,
    pub satisfied: bool,
}

/// Evaluate ħγβ; the single-exponential bath correlation is only valid when it
/// is below one.
pub fn high_temperature_check(bath: &BathSpec) -> HighTemperatureCheck {
    let ratio = rad_per_fs_to_wavenumber(bath.dissipation_rate()) / thermal_energy(bath.temperature_k());
    HighTemperatureCheck {
        ratio,
        satisfied: ratio < 1.0,
    }
}

/// Exciton model together with its bath. Guarantees that the λ shifting the
/// site energies is the same λ that drives the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    model: ExcitonModel,
    bath: BathSpec,
}

impl OpenSystem {
    pub fn new(model: ExcitonModel, bath: BathSpec) -> Result<Self> {
        if model.reorganization_energy_cm() != bath.reorganization_energy_cm() {
            return Err(Error::InvalidModel(format!(
                "model reorganization energy {} cm^-1 differs from bath value {} cm^-1",
                model.reorganization_energy_cm(),
                bath.reorganization_energy_cm()
            )));
        }
        Ok(Self { model, bath })
    }

    /// Convenience constructor from raw site data.
    pub fn from_parts(site_energies_cm: Vec<f64>, couplings_cm: DMatrix<f64>, bath: BathSpec) -> Result<Self> {
        let model = ExcitonModel::new(site_energies_cm, couplings_cm, &bath)?;
        Ok(Self { model, bath })
    }

    pub fn model(&self) -> &ExcitonModel {
        &self.model
    }

    pub fn bath(&self) -> &BathSpec {
        &self.bath
    }

    pub fn n_sites(&self) -> usize {
        self.model.n_sites()
    }

    /// Replace the bath, carrying its λ into the model.
    pub fn with_bath(&self, bath: BathSpec) -> Self {
        let mut model = self.model.clone();
        model.reorganization_energy_cm = bath.reorganization_energy_cm();
        Self { model, bath }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CM: f64 = 1.883_652e-4;

    fn dimer(lambda: f64, tau_c: f64) -> OpenSystem {
        let bath = BathSpec::from_correlation_time(lambda, tau_c, 288.0).unwrap();
        let j = DMatrix::from_row_slice(2, 2, &[0.0, -87.7, -87.7, 0.0]);
        OpenSystem::from_parts(vec![0.0, 120.0], j, bath).unwrap()
    }

    #[test]
    fn constants_match_codata() {
        let u = UnitConstants::CODATA;
        assert!((u.wavenumber_to_angular_frequency / CM - 1.0).abs() < 1e-5);
        assert!((u.boltzmann / 0.695_034_8 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dimer_hamiltonian() {
        let sys = dimer(20.0, 100.0);
        let h = build_hamiltonian(sys.model());
        let conv = UnitConstants::CODATA.wavenumber_to_angular_frequency;
        assert!((h[(0, 0)].re - 20.0 * conv).abs() < 1e-15);
        assert!((h[(1, 1)].re - 140.0 * conv).abs() < 1e-15);
        assert!((h[(0, 1)].re + 87.7 * conv).abs() < 1e-15);
        assert_eq!(h, h.adjoint());
        assert!(h.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn single_site_zero() {
        let bath = BathSpec::new(0.0, 0.01, 300.0).unwrap();
        let m = ExcitonModel::new(vec![0.0], DMatrix::zeros(1, 1), &bath).unwrap();
        assert_eq!(build_hamiltonian(&m), DMatrix::zeros(1, 1));
    }

    #[test]
    fn lambda_shift_preserves_gaps() {
        let a = dimer(20.0, 100.0).model().hamiltonian_real();
        let b = dimer(70.0, 100.0).model().hamiltonian_real();
        let diff = &b - &a;
        let shift = wavenumber_to_rad_per_fs(50.0);
        assert!((diff[(0, 0)] - shift).abs() < 1e-15 && (diff[(1, 1)] - shift).abs() < 1e-15);
        let mut ea: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        let mut eb: Vec<f64> = b.symmetric_eigenvalues().iter().copied().collect();
        ea.sort_by(f64::total_cmp);
        eb.sort_by(f64::total_cmp);
        assert!(((ea[1] - ea[0]) - (eb[1] - eb[0])).abs() < 1e-12);
    }

    #[test]
    fn model_rejects_bad_couplings() {
        let bath = BathSpec::new(10.0, 0.01, 300.0).unwrap();
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(ExcitonModel::new(vec![0.0, 1.0], asym, &bath).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(ExcitonModel::new(vec![0.0, 1.0], diag, &bath).is_err());
        assert!(ExcitonModel::new(vec![0.0], DMatrix::zeros(2, 2), &bath).is_err());
        assert!(ExcitonModel::new(vec![], DMatrix::zeros(0, 0), &bath).is_err());
    }

    #[test]
    fn bath_rejects_bad_values() {
        assert!(BathSpec::new(-1.0, 0.01, 300.0).is_err());
        assert!(BathSpec::new(1.0, 0.0, 300.0).is_err());
        assert!(BathSpec::new(1.0, 0.01, 0.0).is_err());
        assert!(BathSpec::new(f64::NAN, 0.01, 300.0).is_err());
    }

    #[test]
    fn spectral_density_values() {
        let bath = BathSpec::from_correlation_time(20.0, 100.0, 288.0).unwrap();
        let g = bath.dissipation_rate();
        assert_eq!(spectral_density(0.0, &bath), 0.0);
        assert!((spectral_density(g, &bath) - 20.0).abs() < 1e-12);
        assert!(spectral_density(1e6 * g, &bath) < 1e-5 * 20.0);
    }

    #[test]
    fn spectral_density_peaks_at_gamma() {
        let bath = BathSpec::from_correlation_time(35.0, 50.0, 288.0).unwrap();
        let g = bath.dissipation_rate();
        let grid: Vec<f64> = (0..=400).map(|k| k as f64 * g / 100.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&w| spectral_density(w, &bath)).collect();
        assert!(vals.iter().all(|&v| v >= 0.0));
        // forward differences change sign exactly once, at ω = γ (index 100)
        let signs: Vec<bool> = vals.windows(2).map(|w| w[1] > w[0]).collect();
        let flip = signs.windows(2).position(|s| s[0] && !s[1]).unwrap();
        assert!(signs[..=flip].iter().all(|&s| s) && signs[flip + 1..].iter().all(|&s| !s));
        assert!((grid[flip + 1] - g).abs() < g / 50.0);
        let peak = vals.iter().cloned().fold(f64::MIN, f64::max);
        assert!((peak - 35.0).abs() < 1e-12);
    }

    #[test]
    fn c0_values() {
        let bath = BathSpec::from_correlation_time(20.0, 100.0, 288.0).unwrap();
        let c = c0(&bath);
        let kt = 288.0 * 0.695_034_8;
        let expect_re = 2.0 * (20.0 * CM) * (kt * CM);
        let expect_im = -(20.0 * CM) * 0.01;
        assert!((c.re / expect_re - 1.0).abs() < 1e-5);
        assert!((c.im / expect_im - 1.0).abs() < 1e-5);
        assert!(c.re > 0.0 && c.im < 0.0);

        let zero = BathSpec::from_correlation_time(0.0, 100.0, 288.0).unwrap();
        assert_eq!(c0(&zero), Complex64::new(0.0, 0.0));

        let double = bath.with_reorganization_energy(40.0).unwrap();
        assert!((c0(&double).norm() / c.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn high_temperature_ratio() {
        let fast = high_temperature_check(&BathSpec::from_correlation_time(20.0, 50.0, 288.0).unwrap());
        assert!((fast.ratio - 106.17 / 200.17).abs() < 2e-3 && fast.satisfied);
        let slow = high_temperature_check(&BathSpec::from_correlation_time(20.0, 150.0, 288.0).unwrap());
        assert!((slow.ratio - 0.1768).abs() < 1e-3 && slow.satisfied);
        let hot = high_temperature_check(&BathSpec::from_correlation_time(20.0, 50.0, 1e12).unwrap());
        assert!(hot.ratio < 1e-9 && hot.satisfied);
        let cold = high_temperature_check(&BathSpec::from_correlation_time(20.0, 20.0, 77.0).unwrap());
        assert!(!cold.satisfied);
    }

    #[test]
    fn thermal_energy_values() {
        assert!((thermal_energy(288.0) - 200.17).abs() < 0.01);
        // within 1% of the rounded 200 cm^-1
        assert!((thermal_energy(288.0) / 200.0 - 1.0).abs() < 0.01);
        assert!((thermal_energy(0.001) - 6.950_348e-4).abs() < 1e-9);
        assert!((thermal_energy(576.0) - 2.0 * thermal_energy(288.0)).abs() < 1e-12);
    }

    #[test]
    fn open_system_rejects_inconsistent_lambda() {
        let sys = dimer(20.0, 100.0);
        let other = BathSpec::from_correlation_time(30.0, 100.0, 288.0).unwrap();
        assert!(OpenSystem::new(sys.model().clone(), other).is_err());
        let swapped = sys.with_bath(other);
        assert_eq!(swapped.model().reorganization_energy_cm(), 30.0);
    }
}
