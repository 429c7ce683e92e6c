//! A small vertical federated learning simulator: split MLPs trained with
//! SGD, four unlearning baselines, and scenario files that drive them.

mod network;
mod scenario;
mod train;

pub use network::{
    argmax, party_columns, softmax, Mlp, MlpSpec, VflSpec, TAP_EARLY, TAP_MID, TAP_PENULTIMATE,
    TAP_TOP,
};
pub use scenario::{
    export_dir, read_export, report_path, run_scenario, EpochList, ForgetBlock, Method, Run,
    Scenario, ScenarioOutcome, TrainBlock, UnlearnBlock, VflBlock, FORGET_FILE, ORIGINAL_DIR,
    PREDICTIONS_FILE, REPORTS_DIR, RETRAINED_DIR, SCATTER_FILE, SCENARIO_SCHEMA,
};
pub use train::{
    forward_taps, nearest_incorrect_labels, restore_amnesiac, train, train_with_ledger,
    unlearn_amnesiac_lite, unlearn_boundary_lite, unlearn_finetune, unlearn_retrain,
    AmnesiacLedger, Taps, TrainConfig, TrainedModel, DEFAULT_BOUNDARY_BOTTOM_SCALE,
};
