#include "viapt/harness/dataset.hpp"

#include <cmath>
#include <cstring>

#include "viapt/numerics/rng.hpp"
#include "viapt/training/checkpoint.hpp"

namespace viapt {
namespace {

constexpr char kDataMagic[8] = {'V', 'I', 'A', 'D', 'A', 'T', 'A', '\x01'};

// Sum of `blobs` Gaussian bumps with random centres, widths and signs,
// normalized to zero mean and unit variance.
std::vector<float> smooth_pattern(Rng& r, std::uint32_t side, int blobs) {
  std::vector<double> img(std::size_t{side} * side, 0.0);
  for (int b = 0; b < blobs; ++b) {
    const double cy = r.next_uniform() * side, cx = r.next_uniform() * side;
    const double w = 1.0 + r.next_uniform() * side / 4.0;
    const double amp = r.next_uniform() < 0.5 ? -1.0 : 1.0;
    for (std::uint32_t y = 0; y < side; ++y)
      for (std::uint32_t x = 0; x < side; ++x) {
        const double dy = y - cy, dx = x - cx;
        img[y * side + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * w * w));
      }
  }
  double mean = 0, var = 0;
  for (double v : img) mean += v;
  mean /= static_cast<double>(img.size());
  for (double v : img) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(img.size())) + 1e-12;
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>((img[i] - mean) / sd);
  return out;
}

// Quarter turns counter-clockwise.
std::vector<float> rotate90(const std::vector<float>& img, std::uint32_t side, int turns) {
  std::vector<float> cur = img, next(img.size());
  for (int t = 0; t < turns; ++t) {
    for (std::uint32_t y = 0; y < side; ++y)
      for (std::uint32_t x = 0; x < side; ++x) next[(side - 1 - x) * side + y] = cur[y * side + x];
    std::swap(cur, next);
  }
  return cur;
}

double centred_dot(const float* x, const std::vector<float>& t) {
  double mean = 0;
  for (std::size_t i = 0; i < t.size(); ++i) mean += x[i];
  mean /= static_cast<double>(t.size());
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += (x[i] - mean) * t[i];
  return s;
}

void append(Dataset& d, const std::vector<float>& img, std::uint16_t label) {
  d.pixels.insert(d.pixels.end(), img.begin(), img.end());
  d.labels.push_back(label);
}

}  // namespace

DatasetVariant parse_dataset_variant(std::string_view text) {
  if (text == "class_template") return DatasetVariant::class_template;
  if (text == "instance_shift") return DatasetVariant::instance_shift;
  if (text == "pretext_rotation") return DatasetVariant::pretext_rotation;
  throw ConfigError("unknown dataset variant '" + std::string(text) + "'");
}

std::string to_string(DatasetVariant v) {
  switch (v) {
    case DatasetVariant::class_template: return "class_template";
    case DatasetVariant::instance_shift: return "instance_shift";
    case DatasetVariant::pretext_rotation: return "pretext_rotation";
  }
  return "?";
}

void SyntheticDatasetSpec::validate() const {
  if (side == 0 || channels == 0) throw ConfigError("dataset image extent must be positive");
  if (samples < 5) throw ConfigError("dataset needs at least 5 samples");
  if (variant != DatasetVariant::pretext_rotation && (classes < 2 || classes > 65535))
    throw ConfigError("dataset class count must be in [2, 65535]");
  if (!(noise >= 0.0)) throw ConfigError("noise level must be >= 0");
}

std::vector<std::vector<float>> class_templates(const SyntheticDatasetSpec& spec) {
  const Rng root = Rng(spec.seed).derive("templates");
  std::vector<std::vector<float>> t;
  for (std::uint32_t c = 0; c < spec.classes; ++c) {
    std::vector<float> full;
    for (std::uint32_t ch = 0; ch < spec.channels; ++ch) {
      Rng r = root.derive(std::uint64_t{c} * 1000 + ch);
      auto plane = smooth_pattern(r, spec.side, 6);
      full.insert(full.end(), plane.begin(), plane.end());
    }
    t.push_back(std::move(full));
  }
  return t;
}

DatasetSplits generate_dataset(const SyntheticDatasetSpec& spec_in) {
  SyntheticDatasetSpec spec = spec_in;
  if (spec.variant == DatasetVariant::pretext_rotation) spec.classes = 4;
  spec.validate();
  const std::size_t numel = std::size_t{spec.channels} * spec.side * spec.side;
  const auto templates = spec.variant == DatasetVariant::pretext_rotation
                             ? std::vector<std::vector<float>>{}
                             : class_templates(spec);
  const Rng root = Rng(spec.seed).derive("samples");

  DatasetSplits out;
  for (Dataset* d : {&out.train, &out.val, &out.test}) {
    d->channels = spec.channels;
    d->side = spec.side;
    d->classes = spec.classes;
  }
  const std::size_t n_train = spec.samples * 6 / 10, n_val = spec.samples * 2 / 10;

  for (std::uint32_t i = 0; i < spec.samples; ++i) {
    Rng r = root.derive(i);
    std::vector<float> img(numel);
    std::uint16_t label = 0;
    switch (spec.variant) {
      case DatasetVariant::class_template: {
        label = static_cast<std::uint16_t>(r.next_below(spec.classes));
        for (std::size_t k = 0; k < numel; ++k)
          img[k] = templates[label][k] + static_cast<float>(spec.noise * r.next_normal());
        break;
      }
      case DatasetVariant::instance_shift: {
        const auto c = static_cast<std::uint16_t>(r.next_below(spec.classes));
        const bool flip = r.next_uniform() < 0.5;
        const double a = (flip ? -1.0 : 1.0) * (0.6 + 0.8 * r.next_uniform());
        const double b = r.next_uniform() - 0.5;
        label = flip ? static_cast<std::uint16_t>((c + 1) % spec.classes) : c;
        for (std::size_t k = 0; k < numel; ++k)
          img[k] = static_cast<float>(a * templates[c][k] + b + spec.noise * r.next_normal());
        break;
      }
      case DatasetVariant::pretext_rotation: {
        label = static_cast<std::uint16_t>(r.next_below(4));
        const std::size_t plane = std::size_t{spec.side} * spec.side;
        // An upright cue (bright top band, dark left column) gives every
        // base pattern a recoverable orientation.
        for (std::uint32_t ch = 0; ch < spec.channels; ++ch) {
          auto base = smooth_pattern(r, spec.side, 4);
          for (std::uint32_t y = 0; y < spec.side; ++y)
            for (std::uint32_t x = 0; x < spec.side; ++x) {
              float& v = base[y * spec.side + x];
              v *= 0.5f;
              if (y < spec.side / 4) v += 1.5f;
              if (x < spec.side / 8) v -= 1.5f;
            }
          auto rot = rotate90(base, spec.side, label);
          for (std::size_t k = 0; k < plane; ++k)
            img[ch * plane + k] = rot[k] + static_cast<float>(spec.noise * r.next_normal());
        }
        break;
      }
    }
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    append(dst, img, label);
  }
  return out;
}

double template_only_oracle_accuracy(const SyntheticDatasetSpec& spec, const Dataset& data) {
  const auto t = class_templates(spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float* x = data.pixels.data() + i * data.image_numel();
    std::size_t best = 0;
    double best_s = -1e300;
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double s = centred_dot(x, t[c]);
      if (s > best_s) best_s = s, best = c;
    }
    correct += best == data.labels[i] ? 1 : 0;
  }
  return data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
}

double instance_aware_oracle_accuracy(const SyntheticDatasetSpec& spec, const Dataset& data) {
  const auto t = class_templates(spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float* x = data.pixels.data() + i * data.image_numel();
    std::size_t best = 0;
    double best_s = 0, best_abs = -1;
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double s = centred_dot(x, t[c]);
      if (std::abs(s) > best_abs) best_abs = std::abs(s), best_s = s, best = c;
    }
    const std::size_t pred = best_s < 0 ? (best + 1) % t.size() : best;
    correct += pred == data.labels[i] ? 1 : 0;
  }
  return data.size() ? static_cast<double>(correct) / static_cast<double>(data.size()) : 0.0;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& d) {
  std::vector<std::uint8_t> out(kDataMagic, kDataMagic + sizeof(kDataMagic));
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(static_cast<std::uint32_t>(d.size()));
  u32(d.channels);
  u32(d.side);
  u32(d.classes);
  const std::size_t pix = d.pixels.size() * sizeof(float);
  const std::size_t at = out.size();
  out.resize(at + pix + d.labels.size() * 2);
  std::memcpy(out.data() + at, d.pixels.data(), pix);
  std::size_t q = at + pix;
  for (auto l : d.labels) {
    out[q++] = static_cast<std::uint8_t>(l & 0xff);
    out[q++] = static_cast<std::uint8_t>(l >> 8);
  }
  return out;
}

Dataset parse_dataset(const std::vector<std::uint8_t>& b) {
  if (b.size() < sizeof(kDataMagic) + 16) throw FormatError("dataset file truncated: header");
  if (std::memcmp(b.data(), kDataMagic, sizeof(kDataMagic)) != 0)
    throw FormatError("dataset file has bad magic");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[at + i]} << (8 * i);
    return v;
  };
  Dataset d;
  const std::uint32_t n = u32(8);
  d.channels = u32(12);
  d.side = u32(16);
  d.classes = u32(20);
  const std::size_t numel = std::size_t{d.channels} * d.side * d.side;
  const std::size_t need = 24 + std::size_t{n} * numel * 4 + std::size_t{n} * 2;
  if (b.size() != need) {
    throw FormatError("dataset file size " + std::to_string(b.size()) + " does not match header (" +
                      std::to_string(need) + ")");
  }
  d.pixels.resize(std::size_t{n} * numel);
  std::memcpy(d.pixels.data(), b.data() + 24, d.pixels.size() * 4);
  std::size_t q = 24 + d.pixels.size() * 4;
  for (std::uint32_t i = 0; i < n; ++i, q += 2) {
    const auto l = static_cast<std::uint16_t>(b[q] | (b[q + 1] << 8));
    if (l >= d.classes) throw FormatError("dataset label out of range at image " + std::to_string(i));
    d.labels.push_back(l);
  }
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_dataset(d));
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file_bytes(path)); }

void write_splits(const DatasetSplits& s, const std::filesystem::path& dir) {
  write_dataset(s.train, dir / "train.viad");
  write_dataset(s.val, dir / "val.viad");
  write_dataset(s.test, dir / "test.viad");
}

DatasetSplits read_splits(const std::filesystem::path& dir) {
  return {read_dataset(dir / "train.viad"), read_dataset(dir / "val.viad"),
          read_dataset(dir / "test.viad")};
}

}  // namespace viapt
