//! Fixtures shared by the benchmarks.

use csifb::channel::{generate_channel, ChannelRealization, ScenarioConfig};
use csifb::codec::blocks_from_report;
use csifb::csi::extract_precoders;
use csifb::BlockSample;

pub fn channel(id: u64) -> ChannelRealization {
    let cfg = ScenarioConfig::preset("mixed", 7).expect("preset");
    generate_channel(&cfg, id).expect("channel")
}

/// The 20 blocks of one rank-4 report.
pub fn report_blocks(id: u64) -> Vec<BlockSample> {
    let report = extract_precoders(&channel(id), 4).expect("precoders");
    blocks_from_report(&report).expect("blocks")
}

/// `n` blocks drawn from consecutive realizations.
pub fn batch(n: usize) -> Vec<BlockSample> {
    (0..).flat_map(report_blocks).take(n).collect()
}
