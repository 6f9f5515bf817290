//! Round-based message passing, scheduling arithmetic and the closed-loop
//! receding-horizon driver.

mod closed_loop;
mod harness;
mod schedule;

pub use closed_loop::{run_closed_loop, ClosedLoopConfig, ClosedLoopReport, Plant, WindowRecord, WindowSynthesizer};
pub use harness::{
    CommStats, Harness, Message, MessageKind, Payload, TraceRecord, ITEM_HEADER_BYTES, MESSAGE_HEADER_BYTES,
};
pub use schedule::{
    check_tv_constraints, feasibility_sets, feasibility_time, plan_schedule, ratio_to_f64, Feasibility,
    ScheduleConfig, SchedulePlan, TvAdmissibility,
};
