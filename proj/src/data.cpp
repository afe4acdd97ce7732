#include "dsn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "dsn/image_io.hpp"

namespace dsn {

namespace {

constexpr int kSide = 16;
constexpr double kPi = 3.14159265358979323846;

StrokeProgram poly(std::initializer_list<std::pair<double, double>> pts) {
  StrokeProgram p;
  auto it = pts.begin();
  auto prev = *it++;
  for (; it != pts.end(); ++it) {
    p.push_back({prev.first, prev.second, it->first, it->second});
    prev = *it;
  }
  return p;
}

void append(StrokeProgram& dst, const StrokeProgram& src) { dst.insert(dst.end(), src.begin(), src.end()); }

StrokeProgram ring(double cx, double cy, double rx, double ry, int n = 14) {
  StrokeProgram p;
  for (int i = 0; i < n; ++i) {
    double a0 = 2.0 * kPi * i / n, a1 = 2.0 * kPi * (i + 1) / n;
    p.push_back({cx + rx * std::cos(a0), cy + ry * std::sin(a0), cx + rx * std::cos(a1), cy + ry * std::sin(a1)});
  }
  return p;
}

double point_segment_dist(double px, double py, const StrokeSegment& s) {
  double vx = s.x2 - s.x1, vy = s.y2 - s.y1;
  double wx = px - s.x1, wy = py - s.y1;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

const std::vector<StrokeProgram>& glyph_stroke_programs() {
  static const std::vector<StrokeProgram> programs = [] {
    std::vector<StrokeProgram> g(10);
    g[0] = ring(8.0, 8.0, 3.0, 4.6);
    g[1] = poly({{6.6, 4.8}, {8.6, 3.0}, {8.6, 13.0}});
    g[2] = poly({{5.3, 5.6}, {5.8, 4.0}, {7.6, 3.1}, {9.7, 3.6}, {10.5, 5.3}, {9.8, 7.2}, {5.2, 12.9}, {10.8, 12.9}});
    g[3] = poly({{5.5, 3.6}, {8.0, 3.0}, {10.2, 4.2}, {10.0, 6.2}, {7.8, 7.6}});
    append(g[3], poly({{7.8, 7.6}, {10.2, 8.8}, {10.4, 11.0}, {8.2, 13.0}, {5.4, 12.2}}));
    g[4] = poly({{9.8, 3.0}, {4.8, 9.6}, {11.4, 9.6}});
    append(g[4], poly({{9.8, 6.0}, {9.8, 13.2}}));
    g[5] = poly({{10.6, 3.2}, {5.8, 3.2}, {5.5, 7.4}, {8.6, 6.8}, {10.4, 8.4}, {10.0, 11.4}, {7.6, 13.0}, {5.2, 11.8}});
    g[6] = poly({{9.9, 3.0}, {7.0, 6.4}, {5.8, 9.2}});
    append(g[6], ring(8.0, 10.2, 2.7, 2.7, 12));
    g[7] = poly({{5.2, 3.2}, {10.8, 3.2}, {7.2, 13.2}});
    g[8] = ring(8.0, 5.5, 2.3, 2.3, 12);
    append(g[8], ring(8.0, 10.6, 2.8, 2.8, 12));
    g[9] = ring(8.1, 5.8, 2.6, 2.6, 12);
    append(g[9], poly({{10.6, 6.2}, {9.4, 13.0}}));
    return g;
  }();
  return programs;
}

const std::vector<StrokeProgram>& pose_stroke_programs() {
  static const std::vector<StrokeProgram> programs = [] {
    std::vector<StrokeProgram> s(5);
    // Every class is rotationally asymmetric so the in-plane angle is
    // identifiable from the rendered mask.
    s[0] = poly({{6.2, 13.2}, {6.2, 2.8}, {11.4, 2.8}});
    append(s[0], poly({{6.2, 7.6}, {10.2, 7.6}}));
    s[1] = poly({{6.2, 2.8}, {6.2, 12.8}, {11.6, 12.8}, {11.6, 10.2}});
    s[2] = poly({{3.6, 8.0}, {12.4, 8.0}, {9.2, 5.2}});
    append(s[2], poly({{12.4, 8.0}, {9.2, 10.8}}));
    s[3] = poly({{6.4, 13.2}, {6.4, 2.8}, {10.4, 3.6}, {10.8, 5.6}, {9.2, 7.4}, {6.4, 7.6}});
    s[4] = poly({{9.8, 2.8}, {9.8, 10.6}, {8.2, 12.8}, {5.4, 12.0}});
    append(s[4], poly({{9.8, 3.2}, {12.2, 3.2}}));
    return s;
  }();
  return programs;
}

std::vector<uint8_t> rasterize16(const StrokeProgram& program, double rot, double tx, double ty, double thickness) {
  std::vector<uint8_t> mask(kSide * kSide, 0);
  const double c = std::cos(-rot), s = std::sin(-rot);
  const double r = thickness * 0.5;
  for (int py = 0; py < kSide; ++py)
    for (int px = 0; px < kSide; ++px) {
      double x = px + 0.5 - 8.0 - tx;
      double y = py + 0.5 - 8.0 - ty;
      double gx = c * x - s * y + 8.0;
      double gy = s * x + c * y + 8.0;
      for (const StrokeSegment& seg : program) {
        if (point_segment_dist(gx, gy, seg) <= r) {
          mask[static_cast<size_t>(py) * kSide + px] = 1;
          break;
        }
      }
    }
  return mask;
}

namespace {

// Two-octave value noise, bilinear between lattice points, stretched around
// 0.5 by `contrast` and clamped into (0,1).
std::vector<double> value_noise_channel(SplitMix64& rng, double contrast) {
  auto octave = [&](int cells) {
    int n = cells + 1;
    std::vector<double> lattice(static_cast<size_t>(n) * n);
    for (double& v : lattice) v = rng.uniform();
    std::vector<double> out(kSide * kSide);
    for (int py = 0; py < kSide; ++py)
      for (int px = 0; px < kSide; ++px) {
        double u = (px + 0.5) / kSide * cells;
        double v = (py + 0.5) / kSide * cells;
        int i0 = std::min(static_cast<int>(u), cells - 1);
        int j0 = std::min(static_cast<int>(v), cells - 1);
        double fu = u - i0, fv = v - j0;
        double a = lattice[static_cast<size_t>(j0) * n + i0];
        double b = lattice[static_cast<size_t>(j0) * n + i0 + 1];
        double c = lattice[static_cast<size_t>(j0 + 1) * n + i0];
        double d = lattice[static_cast<size_t>(j0 + 1) * n + i0 + 1];
        out[static_cast<size_t>(py) * kSide + px] =
            (a * (1 - fu) + b * fu) * (1 - fv) + (c * (1 - fu) + d * fu) * fv;
      }
    return out;
  };
  std::vector<double> coarse = octave(3);
  std::vector<double> fine = octave(6);
  std::vector<double> out(kSide * kSide);
  for (size_t i = 0; i < out.size(); ++i) {
    double v = 0.8 * coarse[i] + 0.2 * fine[i];
    out[i] = std::clamp(0.5 + contrast * (v - 0.5), 0.03, 0.97);
  }
  return out;
}

struct GlyphJitter {
  double rot, tx, ty, thickness;
};

GlyphJitter draw_glyph_jitter(SplitMix64& rng) {
  GlyphJitter j;
  j.rot = rng.uniform(-15.0, 15.0) * kPi / 180.0;
  j.tx = rng.uniform(-2.0, 2.0);
  j.ty = rng.uniform(-2.0, 2.0);
  j.thickness = rng.uniform(1.0, 2.0);
  return j;
}

Tensor mask_to_image01(const std::vector<uint8_t>& mask) {
  Tensor img({kSide, kSide, 3});
  for (int p = 0; p < kSide * kSide; ++p)
    for (int c = 0; c < 3; ++c) img.data[static_cast<size_t>(p) * 3 + c] = mask[static_cast<size_t>(p)];
  return img;
}

}  // namespace

namespace {

// Channel textures share a base field (luminance-correlated, like natural
// patches) laid over the palette level of this image's draw.
void textured_background(SplitMix64& rng, const TextureParams& tex, std::vector<double> (&out)[3]) {
  std::vector<double> base = value_noise_channel(rng, 1.0);
  bool flipped = rng.uniform() < tex.invert_fraction;
  double level[3];
  for (int c = 0; c < 3; ++c) {
    level[c] = tex.level[c] + rng.uniform(-tex.level_jitter, tex.level_jitter);
    if (flipped) level[c] = 1.0 - level[c];
  }
  for (int c = 0; c < 3; ++c) {
    std::vector<double> chan = value_noise_channel(rng, 1.0);
    out[c].resize(base.size());
    for (size_t i = 0; i < base.size(); ++i) {
      double v = 0.6 * base[i] + 0.4 * chan[i];
      out[c][i] = std::clamp(level[c] + tex.contrast * (v - 0.5), 0.03, 0.97);
    }
  }
}

}  // namespace

GlyphTargetRaw glyph16_target_raw(int cls, const TextureParams& tex, SplitMix64& rng) {
  GlyphJitter j = draw_glyph_jitter(rng);
  GlyphTargetRaw raw;
  raw.mask = rasterize16(glyph_stroke_programs()[static_cast<size_t>(cls)], j.rot, j.tx, j.ty, j.thickness);
  raw.background01 = Tensor({kSide, kSide, 3});
  std::vector<double> ch[3];
  textured_background(rng, tex, ch);
  raw.image01 = Tensor({kSide, kSide, 3});
  for (int p = 0; p < kSide * kSide; ++p)
    for (int c = 0; c < 3; ++c) {
      double bg = ch[c][static_cast<size_t>(p)];
      raw.background01.data[static_cast<size_t>(p) * 3 + c] = bg;
      raw.image01.data[static_cast<size_t>(p) * 3 + c] = raw.mask[static_cast<size_t>(p)] ? 1.0 - bg : bg;
    }
  return raw;
}

// ---------------------------------------------------------------------------

Tensor Dataset::images_of(const std::vector<int>& idx) const {
  const Shape& s = samples.at(0).image.shape;
  Shape out_shape = s;
  out_shape.insert(out_shape.begin(), static_cast<int>(idx.size()));
  Tensor out(out_shape);
  int64_t per = shape_numel(s);
  for (size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = samples.at(static_cast<size_t>(idx[i])).image;
    std::copy(img.data.begin(), img.data.end(), out.data.begin() + static_cast<int64_t>(i) * per);
  }
  return out;
}

Tensor Dataset::onehot_of(const std::vector<int>& idx) const {
  Tensor out({static_cast<int>(idx.size()), num_classes}, 0.0);
  for (size_t i = 0; i < idx.size(); ++i) out.at(static_cast<int>(i), samples.at(static_cast<size_t>(idx[i])).class_label) = 1.0;
  return out;
}

Tensor Dataset::quats_of(const std::vector<int>& idx) const {
  Tensor out({static_cast<int>(idx.size()), 4});
  for (size_t i = 0; i < idx.size(); ++i) {
    const Quaternion& q = samples.at(static_cast<size_t>(idx[i])).pose;
    out.at(static_cast<int>(i), 0) = q.w;
    out.at(static_cast<int>(i), 1) = q.x;
    out.at(static_cast<int>(i), 2) = q.y;
    out.at(static_cast<int>(i), 3) = q.z;
  }
  return out;
}

std::vector<int> Dataset::all_indices() const {
  std::vector<int> idx(samples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return idx;
}

namespace {

// Round-robin class assignment: counts are exactly n/C per class whenever C
// divides n.
int class_of(int i, int num_classes) { return i % num_classes; }

void normalize_domain(std::vector<Dataset*> sets) {
  double sum = 0.0;
  int64_t count = 0;
  for (Dataset* d : sets)
    for (const Sample& s : d->samples) {
      for (double v : s.image.data) sum += v;
      count += s.image.size();
    }
  double mu = count ? sum / static_cast<double>(count) : 0.0;
  double scale = 1.0 / std::max({mu, 1.0 - mu, 1e-6});
  for (Dataset* d : sets)
    for (Sample& s : d->samples)
      for (double& v : s.image.data) v = (v - mu) * scale;
}

Dataset make_glyph_source(int n, int num_classes, const std::vector<StrokeProgram>& programs, SplitMix64& rng) {
  Dataset d;
  d.num_classes = num_classes;
  d.samples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = class_of(i, num_classes);
    GlyphJitter j = draw_glyph_jitter(rng);
    Sample s;
    s.image = mask_to_image01(rasterize16(programs[static_cast<size_t>(cls)], j.rot, j.tx, j.ty, j.thickness));
    s.class_label = cls;
    s.domain_label = 0;
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset make_glyph_target(int n, int num_classes, const TextureParams& tex, SplitMix64& rng) {
  Dataset d;
  d.num_classes = num_classes;
  d.samples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = class_of(i, num_classes);
    Sample s;
    s.image = glyph16_target_raw(cls, tex, rng).image01;
    s.class_label = cls;
    s.domain_label = 1;
    d.samples.push_back(std::move(s));
  }
  return d;
}

DomainData generate_glyph16(const ScenarioSpec& spec) {
  SplitMix64 root(spec.seed);
  SplitMix64 rs = root.fork(0x5001), rt = root.fork(0x5002);
  DomainData dd;
  dd.src_train = make_glyph_source(spec.train_per_domain, 10, glyph_stroke_programs(), rs);
  dd.src_eval = make_glyph_source(spec.eval_per_domain, 10, glyph_stroke_programs(), rs);
  dd.tgt_train = make_glyph_target(spec.train_per_domain, 10, spec.texture, rt);
  dd.tgt_eval = make_glyph_target(spec.eval_per_domain, 10, spec.texture, rt);
  normalize_domain({&dd.src_train, &dd.src_eval});
  normalize_domain({&dd.tgt_train, &dd.tgt_eval});
  return dd;
}

Dataset make_pose_set(int n, bool target, const ScenarioSpec& spec, SplitMix64& rng) {
  const auto& programs = pose_stroke_programs();
  Dataset d;
  d.num_classes = static_cast<int>(programs.size());
  d.samples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int cls = class_of(i, d.num_classes);
    double phi = rng.uniform(-kPi, kPi);
    double tx = rng.uniform(-1.0, 1.0), ty = rng.uniform(-1.0, 1.0);
    double thickness = rng.uniform(1.2, 2.0);
    Sample s;
    s.class_label = cls;
    s.domain_label = target ? 1 : 0;
    s.has_pose = true;
    s.pose = Quaternion::about_z(phi);
    if (!target) {
      s.image = mask_to_image01(rasterize16(programs[static_cast<size_t>(cls)], phi, tx, ty, thickness));
    } else {
      std::vector<uint8_t> mask = rasterize16(programs[static_cast<size_t>(cls)], phi, tx, ty, thickness);
      std::vector<double> ch[3];
      textured_background(rng, spec.pose_texture, ch);
      s.image = Tensor({kSide, kSide, 3});
      for (int p = 0; p < kSide * kSide; ++p)
        for (int c = 0; c < 3; ++c) {
          double bg = ch[c][static_cast<size_t>(p)];
          double v = mask[static_cast<size_t>(p)] ? 1.0 - bg : bg;
          v += rng.uniform(-spec.pose_pixel_noise, spec.pose_pixel_noise);
          s.image.data[static_cast<size_t>(p) * 3 + c] = std::clamp(v, 0.0, 1.0);
        }
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

DomainData generate_pose_glyph(const ScenarioSpec& spec) {
  SplitMix64 root(spec.seed);
  SplitMix64 rs = root.fork(0x7001), rt = root.fork(0x7002);
  DomainData dd;
  dd.src_train = make_pose_set(spec.train_per_domain, false, spec, rs);
  dd.src_eval = make_pose_set(spec.eval_per_domain, false, spec, rs);
  dd.tgt_train = make_pose_set(spec.train_per_domain, true, spec, rt);
  dd.tgt_eval = make_pose_set(spec.eval_per_domain, true, spec, rt);
  normalize_domain({&dd.src_train, &dd.src_eval});
  normalize_domain({&dd.tgt_train, &dd.tgt_eval});
  return dd;
}

Dataset make_blob_set(int n, bool target, const ScenarioSpec& spec, SplitMix64& rng) {
  Dataset d;
  d.num_classes = 3;
  d.samples.reserve(static_cast<size_t>(n));
  const double rot = spec.blob_rotation_deg * kPi / 180.0;
  const double cr = std::cos(rot), sr = std::sin(rot);
  for (int i = 0; i < n; ++i) {
    int cls = class_of(i, 3);
    double ang = kPi / 2.0 + cls * 2.0 * kPi / 3.0;
    double x = 0.45 * std::cos(ang) + spec.blob_sigma_source * rng.normal();
    double y = 0.45 * std::sin(ang) + spec.blob_sigma_source * rng.normal();
    if (target) {
      double xr = cr * x - sr * y + spec.blob_shift_x + spec.blob_extra_noise * rng.normal();
      double yr = sr * x + cr * y + spec.blob_shift_y + spec.blob_extra_noise * rng.normal();
      x = xr;
      y = yr;
    }
    Sample s;
    s.image = Tensor::of({2}, {std::clamp(x, -1.0, 1.0), std::clamp(y, -1.0, 1.0)});
    s.class_label = cls;
    s.domain_label = target ? 1 : 0;
    d.samples.push_back(std::move(s));
  }
  return d;
}

DomainData generate_blobs2d(const ScenarioSpec& spec) {
  SplitMix64 root(spec.seed);
  SplitMix64 rs = root.fork(0x6001), rt = root.fork(0x6002);
  DomainData dd;
  dd.src_train = make_blob_set(spec.train_per_domain, false, spec, rs);
  dd.src_eval = make_blob_set(spec.eval_per_domain, false, spec, rs);
  dd.tgt_train = make_blob_set(spec.train_per_domain, true, spec, rt);
  dd.tgt_eval = make_blob_set(spec.eval_per_domain, true, spec, rt);
  return dd;
}

}  // namespace

DomainData generate(const ScenarioSpec& spec) {
  if (spec.train_per_domain <= 0 || spec.eval_per_domain <= 0)
    throw std::invalid_argument("generate: train and eval sizes must be positive");
  switch (spec.scenario) {
    case Scenario::glyph16: return generate_glyph16(spec);
    case Scenario::blobs2d: return generate_blobs2d(spec);
    case Scenario::pose_glyph: return generate_pose_glyph(spec);
  }
  throw std::invalid_argument("generate: unknown scenario");
}

// ---------------------------------------------------------------------------

BatchIterator::BatchIterator(const Dataset* labeled, const Dataset* unlabeled, int batch_size, uint64_t seed)
    : labeled_(labeled),
      unlabeled_(unlabeled),
      batch_(batch_size),
      rng_lab_(SplitMix64(seed).fork(0xA)),
      rng_unl_(SplitMix64(seed).fork(0xB)) {
  if (batch_size <= 0) throw std::invalid_argument("BatchIterator: batch size must be positive");
  if (labeled_->size() < batch_size || unlabeled_->size() < batch_size)
    throw std::invalid_argument("BatchIterator: batch size " + std::to_string(batch_size) +
                                " exceeds a dataset of " +
                                std::to_string(std::min(labeled_->size(), unlabeled_->size())) + " samples");
}

const std::vector<int>& BatchIterator::advance(const Dataset& set, std::vector<int>& order, size_t& cursor,
                                               SplitMix64& rng, std::vector<int>& out) {
  if (order.empty() || cursor + static_cast<size_t>(batch_) > order.size()) {
    order.resize(static_cast<size_t>(set.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    cursor = 0;
  }
  out.assign(order.begin() + static_cast<long>(cursor), order.begin() + static_cast<long>(cursor) + batch_);
  cursor += static_cast<size_t>(batch_);
  return out;
}

DomainBatch BatchIterator::next() {
  std::vector<int> lab_idx, unl_idx;
  advance(*labeled_, order_lab_, cur_lab_, rng_lab_, lab_idx);
  advance(*unlabeled_, order_unl_, cur_unl_, rng_unl_, unl_idx);

  DomainBatch b;
  b.src_images = labeled_->images_of(lab_idx);
  b.src_labels = labeled_->onehot_of(lab_idx);
  if (!labeled_->samples.empty() && labeled_->samples[0].has_pose) {
    b.src_quats = labeled_->quats_of(lab_idx);
    b.has_quats = true;
  }
  b.tgt_images = unlabeled_->images_of(unl_idx);
  return b;
}

// ---------------------------------------------------------------------------

void dump_dataset(const Dataset& set, const std::string& dir) {
  if (set.samples.empty()) throw std::invalid_argument("dump_dataset: empty dataset");
  if (set.samples[0].image.rank() != 3)
    throw std::invalid_argument("dump_dataset: not an image scenario (sample shape " +
                                shape_str(set.samples[0].image.shape) + ")");
  std::filesystem::create_directories(dir);
  std::ofstream index(dir + "/labels.txt", std::ios::trunc);
  if (!index) throw std::runtime_error("dump_dataset: cannot open " + dir + "/labels.txt");
  char name[32];
  for (size_t i = 0; i < set.samples.size(); ++i) {
    const Sample& s = set.samples[i];
    std::snprintf(name, sizeof(name), "img_%05zu.ppm", i);
    write_pnm(dir + "/" + name, to_u8(s.image));
    index << name << " " << s.class_label;
    if (s.has_pose) {
      char q[128];
      std::snprintf(q, sizeof(q), " %.17g %.17g %.17g %.17g", s.pose.w, s.pose.x, s.pose.y, s.pose.z);
      index << q;
    }
    index << "\n";
  }
}

}  // namespace dsn
