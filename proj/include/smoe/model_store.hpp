#pragma once

#include "smoe/model.hpp"
#include "smoe/pmm.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace smoe::store {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

struct Stored {
  SmoeModel model;
  std::optional<pmm::MotionTrack> track;
};

/// Exact byte count of a file with the given contents.
std::size_t file_size(std::size_t kernels, bool slopes, int p, int frames);

/// A model with zero kernels is accepted so that a file can carry only a track.
void save(const SmoeModel& model, const std::optional<pmm::MotionTrack>& track, const std::filesystem::path& path);
Stored load(const std::filesystem::path& path);

}  // namespace smoe::store
