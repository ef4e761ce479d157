#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "flk/flicker.hpp"
#include "flk/network.hpp"
#include "flk/train.hpp"

namespace flk::cli {

/// Settings read from a flat key=value file. Every key is optional.
///
///   ac_frequency = 50            # Hz
///   gamma_w = 1
///   exposure_time = 0.002        # s
///   row_readout_time = 0.0001    # s
///   phases = 0, 2.0944, 4.18879  # radians, one per frame
///   orientation = horizontal     # or vertical
///   model.channels = 8, 16, 24
///   model.blocks = 2, 2, 2
///   model.heads = 1, 2, 4
///   model.window = 4
///   model.gamma = 2.66
///   train.lr = 1e-4
///   train.steps = 500
///   seed = 0
struct CliConfig {
  FlickerParams flicker;
  ModelConfig model;
  TrainOptions train;
  std::uint64_t seed = 0;
};

/// Throws ParseError naming the line for unknown keys, duplicates and bad values.
CliConfig parse_config(std::string_view text);
CliConfig load_config(const std::filesystem::path& path);

}  // namespace flk::cli
