use crate::param_space::{HardwareDescriptor, ResourceUsage};

/// Largest number of blocks that fit on one multiprocessor at once, limited by
/// shared memory, the register file and the warp slots.
pub fn resident_blocks(res: &ResourceUsage, hw: &HardwareDescriptor) -> u64 {
    let warps = warps_per_block(res, hw);
    if warps == 0 {
        return 0;
    }
    let by_shared = hw.max_shared_bytes_per_block.checked_div(res.shared_bytes).unwrap_or(u64::MAX);
    let regs_per_block = res.registers_per_thread * warps * hw.warp_size;
    let by_registers = hw.register_file_per_multiprocessor().checked_div(regs_per_block).unwrap_or(u64::MAX);
    let by_warps = hw.max_warps_per_multiprocessor / warps;
    by_shared.min(by_registers).min(by_warps)
}

/// Mean number of resident warps per multiprocessor when the grid is large
/// enough to fill the device.
pub fn occupancy(res: &ResourceUsage, hw: &HardwareDescriptor) -> f64 {
    let warps = resident_blocks(res, hw) * warps_per_block(res, hw);
    warps.min(hw.max_warps_per_multiprocessor) as f64
}

pub(crate) fn warps_per_block(res: &ResourceUsage, hw: &HardwareDescriptor) -> u64 {
    res.threads_per_block.div_ceil(hw.warp_size)
}
