#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsn/losses.hpp"
#include "dsn/model.hpp"
#include "dsn/rng.hpp"
#include "dsn/tensor.hpp"

namespace dsn {

struct TextureParams {
  // Background patches follow a colored palette: strokes inverted against it
  // keep only weak luminance contrast but a strong opposite color direction,
  // so the domain gap is mostly a color map. A small fraction of patches is
  // palette-inverted, which flips stroke polarity outright.
  double level[3] = {0.62, 0.45, 0.28};  // per-channel patch level
  double level_jitter = 0.08;            // per-image per-channel cast
  double contrast = 0.5;                 // local texture amplitude
  double invert_fraction = 0.0;          // probability of a flipped palette
};

struct Sample {
  Tensor image;  // values in [-1,1]; HWC for image scenarios, flat for blobs2d
  int class_label = 0;
  int domain_label = 0;  // 0 = source, 1 = target
  bool has_pose = false;
  Quaternion pose;
};

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;

  int size() const { return static_cast<int>(samples.size()); }
  Tensor images_of(const std::vector<int>& idx) const;
  Tensor onehot_of(const std::vector<int>& idx) const;
  Tensor quats_of(const std::vector<int>& idx) const;
  std::vector<int> all_indices() const;
};

struct ScenarioSpec {
  Scenario scenario = Scenario::glyph16;
  int train_per_domain = 5000;
  int eval_per_domain = 1000;
  uint64_t seed = 1;

  // glyph16 / pose_glyph background model
  TextureParams texture;
  TextureParams pose_texture;
  double pose_pixel_noise = 0.06;

  // blobs2d; the rotation is a fixed property of the scenario
  double blob_sigma_source = 0.12;
  double blob_extra_noise = 0.20;
  double blob_rotation_deg = 25.0;
  double blob_shift_x = 0.22;
  double blob_shift_y = -0.16;
};

struct DomainData {
  Dataset src_train, src_eval, tgt_train, tgt_eval;
};

// Deterministic in (spec, seed); the four sets are disjoint draws. Images are
// mean-centered per domain and rescaled into [-1,1].
DomainData generate(const ScenarioSpec& spec);

// A training mini-batch: the labeled side carries class (and pose) labels,
// the target side deliberately exposes images only.
struct DomainBatch {
  Tensor src_images;
  Tensor src_labels;  // one-hot [B,C]
  Tensor src_quats;   // [B,4] when has_quats
  bool has_quats = false;
  Tensor tgt_images;
};

// Independent per-domain shuffles, reshuffled every epoch, deterministic in
// seed. Target labels never reach the batch.
class BatchIterator {
 public:
  BatchIterator(const Dataset* labeled, const Dataset* unlabeled, int batch_size, uint64_t seed);
  DomainBatch next();

 private:
  const std::vector<int>& advance(const Dataset& set, std::vector<int>& order, size_t& cursor, SplitMix64& rng,
                                  std::vector<int>& out);
  const Dataset* labeled_;
  const Dataset* unlabeled_;
  int batch_;
  SplitMix64 rng_lab_, rng_unl_;
  std::vector<int> order_lab_, order_unl_;
  size_t cur_lab_ = 0, cur_unl_ = 0;
};

// --- internals exposed for tests -------------------------------------------

struct StrokeSegment {
  double x1, y1, x2, y2;
};
using StrokeProgram = std::vector<StrokeSegment>;

const std::vector<StrokeProgram>& glyph_stroke_programs();   // 10 digit-like classes
const std::vector<StrokeProgram>& pose_stroke_programs();    // 5 asymmetric classes

// 16x16 binary rasterization of a stroke program under rotation (radians),
// translation (pixels) and stroke thickness (pixels).
std::vector<uint8_t> rasterize16(const StrokeProgram& program, double rot, double tx, double ty, double thickness);

struct GlyphTargetRaw {
  std::vector<uint8_t> mask;
  Tensor background01;  // [16,16,3] in [0,1]
  Tensor image01;       // mask ? 1-bg : bg
};
// One raw (pre-normalization) target draw; the generator itself goes through
// this path, so tests of the inversion rule exercise production code.
GlyphTargetRaw glyph16_target_raw(int cls, const TextureParams& tex, SplitMix64& rng);

// Dumps one directory per domain: binary PPM images plus labels.txt lines of
// "filename class [qw qx qy qz]". Image scenarios only.
void dump_dataset(const Dataset& set, const std::string& dir);

}  // namespace dsn
