//! Sources of frozen-encoder features, teacher logits and VLM answers.

pub mod clients;
pub mod files;
mod parse;
pub mod synthetic;

pub use clients::{
    extract_features, mean_pool, predict_vlm, EncoderClient, RemoteEncoderClient, RemoteVlmClient,
    VlmClient,
};
pub use files::{
    load_feature_file, load_teacher_file, load_vlm_file, write_feature_file, write_teacher_file,
    write_vlm_file, FeatureRecord, FeatureSet, RecordSet, TeacherRecord, TeacherSet, VlmParse,
    VlmPrediction, VlmSet,
};
pub use parse::parse_vlm_response;
pub use synthetic::{
    generate_synthetic, space_for_classes, BucketCounts, SyntheticDataset, SyntheticSpec,
};
