//! Interpolation and flow benchmarks, the pretrained-versus-scratch
//! comparison, the low-data sweep and curve plots.

mod experiments;
mod flow;
mod interp;
mod plot;

pub use experiments::{compare_pretrained_vs_scratch, low_data_sweep, Comparison, SweepPoint, SweepResult};
pub use flow::{
    eval_flow, eval_flow_with, flow_for_sequence, predict_flow, FlowEvalSet, FlowEvaluation, FlowPostProcess,
    FlowSampleScore,
};
pub use interp::{
    color_scores, eval_interpolation, linear_blend, InterpEvalSet, InterpSampleScore, InterpolationReport,
};
pub use plot::{svg_line_chart, Series};
