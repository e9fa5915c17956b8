#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "lori/adapter.hpp"
#include "lori/mask_calibration.hpp"
#include "lori/merge.hpp"

namespace lori {

inline constexpr std::uint32_t kAdapterFormatVersion = 1;
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Extra context stored with an adapter so a file is self-describing.
struct AdapterFileInfo {
    std::string kind = "lori";  // "lori" or "lora"
    SlotKey slot;
    std::uint64_t seed = 0;
    double sparsity = 0.0;
    std::string granularity = "model";
    std::int64_t calibration_steps = 0;
};

/// Layout: magic "LORI", u32 LE format version, u32 LE metadata length,
/// metadata (JSON text), payload (A then B as little-endian float32
/// row-major, then the mask bit-packed row-major LSB-first within each
/// byte), u32 LE CRC-32 over the payload bytes.
void save_adapter(const LoriAdapter& adapter, const std::filesystem::path& path,
                  const AdapterFileInfo& info = {});

struct LoadedAdapter {
    LoriAdapter adapter;
    AdapterFileInfo info;
};

/// Validates magic, version, and payload checksum (in that order) before
/// trusting any payload field. Weights come back float32-quantized; the
/// mask is bit-exact.
LoadedAdapter load_adapter(const std::filesystem::path& path);

/// Human-readable header + per-matrix sparsity summary for `inspect`.
std::string inspect_adapter(const std::filesystem::path& path);

/// Merged-model container: magic "LORM", u32 LE version, u32 LE metadata
/// length, metadata JSON (slot shapes in order, merge provenance), payload
/// of concatenated float32 LE row-major slot weights, u32 LE CRC-32.
void save_merged_model(const MergedModel& model, const std::filesystem::path& path);
MergedModel load_merged_model(const std::filesystem::path& path);

} // namespace lori
