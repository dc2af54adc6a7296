//! Metrics, directional analysis, speed benchmark and visual exports.

pub mod directional;
pub mod evaluate;
pub mod fps;
pub mod metrics;
pub mod visuals;

pub use directional::{directional_report, sector_of_column, DirectionalReport, SectorReport};
pub use evaluate::{evaluate_records, predict_labels, predict_logits, EvalHead, SplitEvaluation};
pub use fps::{fps_benchmark, hardware_description, FpsReport};
pub use metrics::{confusion_update, format_gap_table, format_iou_table, iou_report, miou_gap, ConfusionMatrix, IouReport};
pub use visuals::{colorize, decode_colors, export_heatmap, export_visuals, normalize_to_u8, HeatmapSidecar};
