use serde::Deserialize;

use crate::error::{Result, SimError};
use crate::time::{transfer_ps, us_to_ps, Ps};

/// NAND geometry, latencies and link rates of one device. Rates are bytes per
/// second.
#[derive(Clone, Debug, PartialEq)]
pub struct SsdConfig {
    pub channels: u32,
    pub dies_per_channel: u32,
    pub planes_per_die: u32,
    pub blocks_per_plane: u32,
    pub wordlines_per_block: u32,
    /// Pages per wordline (3 for TLC).
    pub bits_per_cell: u32,
    pub page_size: u64,
    pub t_r_us: f64,
    pub t_prog_us: f64,
    pub channel_rate: u64,
    pub interface_bw: u64,
    pub internal_dram_bw: u64,
}

const KIB: u64 = 1024;

impl SsdConfig {
    /// SATA-class device: 8 channels, 8 dies, 4 planes, 600 MB/s host link.
    pub fn ssd_c() -> Self {
        Self {
            channels: 8,
            dies_per_channel: 8,
            planes_per_die: 4,
            blocks_per_plane: 2048,
            wordlines_per_block: 196,
            bits_per_cell: 3,
            page_size: 16 * KIB,
            t_r_us: 52.5,
            t_prog_us: 700.0,
            channel_rate: 1_200_000_000,
            interface_bw: 600_000_000,
            internal_dram_bw: 12_800_000_000,
        }
    }

    /// PCIe Gen4 x4 device: 16 channels, 8 dies, 2 planes, 8 GB/s host link.
    pub fn ssd_p() -> Self {
        Self {
            channels: 16,
            planes_per_die: 2,
            interface_bw: 8_000_000_000,
            ..Self::ssd_c()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ssd-c" | "ssd_c" => Ok(Self::ssd_c()),
            "ssd-p" | "ssd_p" => Ok(Self::ssd_p()),
            other => Err(SimError::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }

    /// Parses a key-value config. An optional `preset` key picks the starting
    /// point (default `ssd-c`); every other key overrides one field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut cfg = match &file.preset {
            Some(p) => Self::preset(p)?,
            None => Self::ssd_c(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = file.$f { cfg.$f = v; } )* };
        }
        apply!(
            channels,
            dies_per_channel,
            planes_per_die,
            blocks_per_plane,
            wordlines_per_block,
            bits_per_cell,
            page_size,
            t_r_us,
            t_prog_us,
            channel_rate,
            interface_bw,
            internal_dram_bw
        );
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("channels", self.channels as u64),
            ("dies_per_channel", self.dies_per_channel as u64),
            ("planes_per_die", self.planes_per_die as u64),
            ("blocks_per_plane", self.blocks_per_plane as u64),
            ("wordlines_per_block", self.wordlines_per_block as u64),
            ("bits_per_cell", self.bits_per_cell as u64),
            ("page_size", self.page_size),
            ("channel_rate", self.channel_rate),
            ("interface_bw", self.interface_bw),
            ("internal_dram_bw", self.internal_dram_bw),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SimError::InvalidConfig(format!("{name} must be positive")));
        }
        for (name, v) in [("t_r_us", self.t_r_us), ("t_prog_us", self.t_prog_us)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn with_channels(&self, channels: u32) -> Self {
        Self {
            channels,
            ..self.clone()
        }
    }

    pub fn pages_per_block(&self) -> u64 {
        self.wordlines_per_block as u64 * self.bits_per_cell as u64
    }

    pub fn block_bytes(&self) -> u64 {
        self.pages_per_block() * self.page_size
    }

    pub fn total_blocks(&self) -> u64 {
        self.channels as u64 * self.dies_per_channel as u64 * self.planes_per_die as u64 * self.blocks_per_plane as u64
    }

    pub fn capacity(&self) -> u64 {
        self.total_blocks() * self.block_bytes()
    }

    pub fn t_r(&self) -> Ps {
        us_to_ps(self.t_r_us)
    }

    pub fn t_prog(&self) -> Ps {
        us_to_ps(self.t_prog_us)
    }

    /// Time for one page to cross a channel.
    pub fn page_transfer(&self) -> Ps {
        transfer_ps(self.page_size, self.channel_rate)
    }

    /// Peak page supply of one channel's dies when every read is multiplane.
    pub fn die_supply_rate(&self) -> f64 {
        (self.dies_per_channel as u64 * self.planes_per_die as u64 * self.page_size) as f64 / (self.t_r_us * 1e-6)
    }

    /// Steady sequential-read ceiling of one channel.
    pub fn channel_read_ceiling(&self) -> f64 {
        (self.channel_rate as f64).min(self.die_supply_rate())
    }

    pub fn internal_read_ceiling(&self) -> f64 {
        self.channels as f64 * self.channel_read_ceiling()
    }

    /// Aggregate program throughput when all planes write in parallel.
    pub fn program_rate(&self) -> f64 {
        let planes = self.channels as u64 * self.dies_per_channel as u64 * self.planes_per_die as u64;
        let array = (planes * self.page_size) as f64 / (self.t_prog_us * 1e-6);
        array.min(self.channels as f64 * self.channel_rate as f64)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    channels: Option<u32>,
    dies_per_channel: Option<u32>,
    planes_per_die: Option<u32>,
    blocks_per_plane: Option<u32>,
    wordlines_per_block: Option<u32>,
    bits_per_cell: Option<u32>,
    page_size: Option<u64>,
    t_r_us: Option<f64>,
    t_prog_us: Option<f64>,
    channel_rate: Option<u64>,
    interface_bw: Option<u64>,
    internal_dram_bw: Option<u64>,
}
