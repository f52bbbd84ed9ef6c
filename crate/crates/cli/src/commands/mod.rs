pub mod build_dataset;
pub mod calibrate_fpn;
pub mod calibrate_pg;
pub mod denoise;
pub mod estimate_pbn;
pub mod evaluate;
pub mod quantize_check;
pub mod simulate;
pub mod training_pairs;
