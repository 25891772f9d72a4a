//! Normal modes, spectra, occupation projections, correlations, transition
//! states and cavity scans.

pub mod correlation;
pub mod modes;
pub mod occupation;
pub mod scan;
pub mod spectrum;
pub mod transition_state;

pub use correlation::{bond_force_correlation, BondCorrelation};
pub use modes::{hessian, normal_modes, polariton_modes, sic_weighted_spectrum, NormalModes};
pub use occupation::{mode_occupation, occupation_difference, OccupationDifference, OccupationMap};
pub use scan::{coupling_scan, resonance_scan, ScanPoint, ScanRow, ScanSettings};
pub use spectrum::{broadened, ir_spectrum, td_spectrum, Broadening, LineShape, PowerSpectrum, SpectrumLine, WindowFunction};
pub use transition_state::{find_transition_state, TsResult, TsScan};
