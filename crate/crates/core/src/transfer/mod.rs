//! Finite-rank cylinder discretizations of the transfer operators of the
//! induced map and of truncated towers, with renewal sequences, resolvent
//! scans, Laplace-transform series and the bookkeeping of the rate argument.

mod basis;
mod budget;
mod operator;
mod renewal;
mod scan;
mod series;
mod tower_op;

pub use basis::{Cylinder, CylinderBasis, LUMP};
pub use budget::{
    budget_constraints, dn_growth_check, rate_budget, BudgetRow, ColumnConstantExample, Constraints, DnCheck, DnClass,
    RateBudget, Schedule, TailData, YnReport,
};
pub use operator::{assemble_r, assemble_twisted, OperatorMatrix};
pub use renewal::{renewal_build, tower_operator_decomposition, DecompositionReport, RenewalCheck, RenewalData};
pub use scan::{
    lasota_yorke_check, operator_b_norm, random_probes, resolvent_scan, roof_holder_sum, twist_perturbation_check,
    BNorm, LasotaYorkeReport, LasotaYorkeRow, ProbeOptions, ResolventRow, ResolventScan, RoofHolderSum,
    TwistPerturbation, RESONANCE_TOL,
};
pub use series::{laplace_mc, laplace_series, map_correlation_operator, LaplaceMc, LaplaceValue, MapCorrelation};
pub use tower_op::{Column, TowerOperator};
