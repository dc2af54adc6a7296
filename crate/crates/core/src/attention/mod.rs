//! Position/channel attention and prototype-based regional attention.

mod dual;
mod region;

pub use dual::{
    channel_attention, position_attention, query_attention_map, ChannelAttention, DualAttention, DualOutput,
    PositionAttention,
};
pub use region::{region_construction, region_interaction, RegionDecisionMap};
