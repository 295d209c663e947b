#pragma once

#include <string>

#include "lga/data.hpp"
#include "lga/model.hpp"

namespace lga {

// LGAF dataset file:
//   "LGAF" | u32 version=1 | u64 seed
//   | C,H,W,classes,patch u32 | strength,noise f64 | distractors u32
//   | count u64
//   | per instance: label u32, patch_center 2xf64, patch_box 4xf64,
//     features C*H*W f64 (channel-major row-major)
// All integers and reals little-endian.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// LGAM model file:
//   "LGAM" | u32 version=1
//   | C,H,W,k,classes,hidden,C_d,lga_enabled u32 | s_ratio,lambda_reg,lambda_lga f64
//   | per weight (fixed order): u32 rank, u32 extents..., f64 data
struct SavedModel {
  LgaModel model;
  bool lga_enabled = true;
};
void save_model(const LgaModel& model, bool lga_enabled, const std::string& path);
SavedModel load_model(const std::string& path);

// ASCII PGM "P2", maxval 255, pixel = round(255 * value) half-up.
void write_pgm(const Tensor& mask, const std::string& path);

// Whole-file atomic write (temp + rename).
void write_text_atomic(const std::string& path, const std::string& content);

std::string format_double(double v);

}  // namespace lga
