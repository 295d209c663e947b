#pragma once

#include <string>

#include "lga/data.hpp"
#include "lga/model.hpp"
#include "lga/train.hpp"

namespace lga {

// Merged task + model + training configuration, sourced from a plain
// key=value file ('#' comments) plus flag overrides; flags win.
struct RunConfig {
  TaskConfig task;
  LgaConfig lga;
  TrainConfig train;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;

  // Applies one key=value pair; unknown keys and malformed values throw
  // ConfigError naming the key.
  void set(const std::string& key, const std::string& value);

  void load_file(const std::string& path);

  // Syncs shared extents (channels/classes) into the model config and
  // resolves downsample_channels = max(1, channels/4) unless set explicitly.
  void finalize();

 private:
  bool down_channels_set_ = false;
  bool lambda_reg_set_ = false;
  bool lambda_lga_set_ = false;
};

}  // namespace lga
