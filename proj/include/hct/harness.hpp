#pragma once

// Everything the command-line front end stands on: a deterministic
// synthetic RGB-D dataset generator, portable PGM/PPM image IO, an
// on-disk dataset layout, a binary checkpoint format for the parameter
// store, flat key=value run configuration, and an attention-map dumper
// for qualitative inspection.

#include <cstdint>
#include <string>
#include <vector>

#include "hct/model.hpp"
#include "hct/params.hpp"
#include "hct/sample.hpp"
#include "hct/train.hpp"

namespace hct {

// ---------------------------------------------------------------------------
// Synthetic data

// Generates n scenes of extent size x size (size must be a positive
// multiple of 16, n at least 1; anything else throws ConfigError). Each
// scene is a textured gradient background with one to three filled
// rectangles or ellipses whose depth band is separated from the
// background's, so the objects are easy to find in depth even when their
// color blends in. The ground truth is the union of the shapes. Sample i
// depends only on (seed, i), so regenerating any subset is reproducible.
std::vector<Sample> synth_dataset(std::uint64_t seed, int n, int size);

// ---------------------------------------------------------------------------
// Image files (binary PGM/PPM, 8-bit, maxval 255)

// map must be rank-2 [h, w] or rank-3 [h, w, 1]; rgb must be [h, w, 3].
// Values are clamped to [0, 1] and scaled linearly to 0..255. Throws
// IoError when the file cannot be written.
void write_pgm(const std::string& path, const Tensor& map);
void write_ppm(const std::string& path, const Tensor& rgb);

// Read back to [h, w] (PGM) or [h, w, 3] (PPM) with values in [0, 1].
// Bad magic bytes, a maxval other than 255, malformed headers and
// truncated pixel data all throw IoError naming the file.
Tensor read_pgm(const std::string& path);
Tensor read_ppm(const std::string& path);

// ---------------------------------------------------------------------------
// Dataset directories
//
// A dataset is a directory holding <id>_rgb.ppm, <id>_depth.pgm and
// <id>_gt.pgm per sample plus an index.txt listing the ids one per line
// in dataset order.

void save_dataset(const std::string& root, const std::vector<Sample>& data);

// Loads every id in index order. Ground-truth pixels are re-binarized at
// one half so the masks survive the 8-bit round trip exactly. Throws
// IoError for a missing or malformed index and ShapeError when a sample's
// three images disagree on extents.
std::vector<Sample> load_dataset(const std::string& root);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Binary layout, all integers little-endian:
//   magic "HCT1" | u32 version (currently 1)
//   u64 config text length | that many bytes (key=value model config)
//   u64 parameter count
//   per parameter, in store (name) order:
//     u64 name length | name bytes
//     u32 rank | rank x u32 extents
//     numel x f64 values (IEEE-754 bit patterns as little-endian u64)
// Values round-trip bitwise. Bad magic, an unsupported version and a
// truncated or oversized file throw IoError with distinct messages.

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& ps);

Checkpoint load_checkpoint(const std::string& path);

// Checks that loaded parameter names and shapes are exactly those of a
// model built from expect: a shape mismatch throws ShapeError naming the
// parameter, an unknown or missing name throws Error. No partially
// checked state escapes; on success the checkpoint is returned whole.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expect);

// ---------------------------------------------------------------------------
// Run configuration
//
// Flat key=value text, one pair per line; '#' starts a comment and blank
// lines are skipped. Keys are typed and unknown keys, duplicate keys and
// unparseable values throw ConfigError naming the line. Model keys:
// input, rgb_channels, depth_channels, c_s, c_d, heads, enc_blocks,
// mlp_ratio, lca_radius, dcm_kernel, ln_eps, seed. Training keys:
// batch_size, epochs, lr_start, lr_end, beta1, beta2, adam_eps,
// train_seed, flip_augment. Data keys: samples, data_seed.

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int samples = 8;             // synthetic dataset size for training runs
  std::uint64_t data_seed = 7; // synthetic dataset seed
};

RunConfig parse_run_config(const std::string& text);
std::string format_run_config(const RunConfig& cfg);

// The model subset alone, used for the checkpoint config snapshot.
ModelConfig parse_model_config(const std::string& text);
std::string format_model_config(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Attention dumps

// Runs one forward pass and writes grayscale images into out_dir: the
// head-0 exchange-block attention rows (global and local, color and
// depth) for the corner and center query patches of the deepest token
// grid, the four decoder stage maps as probabilities, and the final
// saliency map. Filenames encode the stage and the query patch index:
// gsa_r_q<idx>.pgm, gsa_d_q<idx>.pgm, lca_r_q<idx>.pgm, lca_d_q<idx>.pgm,
// p1.pgm .. p4.pgm, final.pgm. Returns the written file names in order.
std::vector<std::string> dump_attention(const ParamStore& ps, const ModelConfig& cfg,
                                        const Sample& sample, const std::string& out_dir);

}  // namespace hct
