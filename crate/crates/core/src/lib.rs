// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod catalog;
pub mod complementarity;
pub mod error;
pub mod milp;
pub mod model;
pub mod mopf;
pub mod nlp;
pub mod orchestrator;
pub mod report;
pub mod scenario;
pub mod settings;

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
    #[doc = include_str!("../../../book/src/catalog.md")]
    pub mod catalog {}
    #[doc = include_str!("../../../book/src/design-milp.md")]
    pub mod design_milp {}
    #[doc = include_str!("../../../book/src/power-flow.md")]
    pub mod power_flow {}
    #[doc = include_str!("../../../book/src/complementarity.md")]
    pub mod complementarity {}
    #[doc = include_str!("../../../book/src/decomposition.md")]
    pub mod decomposition {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
