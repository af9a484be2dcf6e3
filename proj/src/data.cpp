#include "rdm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rdm/errors.hpp"

namespace rdm::data {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::uint64_t kTemplateSeed = 0x52444d5f44494749ULL;  // glyph templates are class-intrinsic

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("idx: truncated file " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("rdmd: truncated file " + path);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

void EnvironmentSpec::validate() const {
  if (!(agreement >= 0.0 && agreement <= 1.0)) {
    throw ConfigError("environment: agreement must be in [0,1], got " + std::to_string(agreement));
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw ConfigError("environment: label_noise must be in [0,1], got " + std::to_string(label_noise));
  }
  if (n < 1) throw ConfigError("environment: sample count must be >= 1");
}

DigitSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("idx: cannot open " + images_path);
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw DataError("idx: cannot open " + labels_path);

  std::uint32_t magic = read_u32_be(imgs, images_path);
  if (magic != kIdxImagesMagic) {
    throw DataError("idx: wrong magic in " + images_path + " (expected 0x00000803)");
  }
  std::uint32_t n_images = read_u32_be(imgs, images_path);
  std::uint32_t rows = read_u32_be(imgs, images_path);
  std::uint32_t cols = read_u32_be(imgs, images_path);

  std::uint32_t lmagic = read_u32_be(lbls, labels_path);
  if (lmagic != kIdxLabelsMagic) {
    throw DataError("idx: wrong magic in " + labels_path + " (expected 0x00000801)");
  }
  std::uint32_t n_labels = read_u32_be(lbls, labels_path);
  if (n_images != n_labels) {
    throw DataError("idx: count mismatch, " + std::to_string(n_images) + " images vs " + std::to_string(n_labels) +
                    " labels");
  }

  DigitSet set;
  set.rows = rows;
  set.cols = cols;
  std::size_t px = static_cast<std::size_t>(rows) * cols;
  set.images.resize(static_cast<std::size_t>(n_images) * px);
  set.labels.resize(n_images);

  std::vector<unsigned char> buf(px);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(px));
    if (!imgs) throw DataError("idx: truncated file " + images_path);
    for (std::size_t j = 0; j < px; ++j) set.images[i * px + j] = buf[j] / 255.0;
  }
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    unsigned char c;
    lbls.read(reinterpret_cast<char*>(&c), 1);
    if (!lbls) throw DataError("idx: truncated file " + labels_path);
    set.labels[i] = c;
  }
  return set;
}

ProceduralDigits::ProceduralDigits() {
  templates_.resize(10);
  for (int c = 0; c < 10; ++c) {
    Rng rng(mix64(kTemplateSeed, static_cast<std::uint64_t>(c)));
    int strokes = 3 + static_cast<int>(rng.below(2));
    for (int s = 0; s < strokes; ++s) {
      Stroke st;
      st.x0 = rng.uniform(5.0, 23.0);
      st.y0 = rng.uniform(5.0, 23.0);
      st.x1 = rng.uniform(5.0, 23.0);
      st.y1 = rng.uniform(5.0, 23.0);
      templates_[static_cast<std::size_t>(c)].push_back(st);
    }
  }
}

void ProceduralDigits::next(Rng& rng, std::span<double> image784, int& digit) {
  digit = static_cast<int>(rng.below(10));
  double off_x = rng.uniform(-2.0, 2.0);
  double off_y = rng.uniform(-2.0, 2.0);

  double canvas[28 * 28] = {0.0};
  const double thickness = 1.8;
  for (const Stroke& st : templates_[static_cast<std::size_t>(digit)]) {
    double x0 = st.x0 + off_x + rng.uniform(-1.5, 1.5);
    double y0 = st.y0 + off_y + rng.uniform(-1.5, 1.5);
    double x1 = st.x1 + off_x + rng.uniform(-1.5, 1.5);
    double y1 = st.y1 + off_y + rng.uniform(-1.5, 1.5);
    double dx = x1 - x0, dy = y1 - y0;
    double len2 = dx * dx + dy * dy;
    int rmin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - thickness)));
    int rmax = std::min(27, static_cast<int>(std::ceil(std::max(y0, y1) + thickness)));
    int cmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - thickness)));
    int cmax = std::min(27, static_cast<int>(std::ceil(std::max(x0, x1) + thickness)));
    for (int r = rmin; r <= rmax; ++r) {
      for (int col = cmin; col <= cmax; ++col) {
        double px = col + 0.5, py = r + 0.5;
        double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        double qx = x0 + t * dx, qy = y0 + t * dy;
        double dist = std::sqrt((px - qx) * (px - qx) + (py - qy) * (py - qy));
        double v = 1.0 - dist / thickness;
        if (v > 0.0) canvas[r * 28 + col] = std::max(canvas[r * 28 + col], v);
      }
    }
  }

  // 3x3 box blur, then light uniform pixel noise.
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      double acc = 0.0;
      int cnt = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr > 27 || cc < 0 || cc > 27) continue;
          acc += canvas[rr * 28 + cc];
          ++cnt;
        }
      }
      image784[static_cast<std::size_t>(r) * 28 + static_cast<std::size_t>(c)] = acc / cnt;
    }
  }
  for (std::size_t i = 0; i < 784; ++i) {
    image784[i] = clamp01(image784[i] + rng.uniform(0.0, 0.08));
  }
}

IdxDigits::IdxDigits(const DigitSet& set, std::size_t begin, std::size_t end) : set_(&set), pos_(begin), end_(end) {
  if (end > set.n() || begin > end) throw DataError("idx source: slice out of range");
  if (set.rows != 28 || set.cols != 28) throw DataError("idx source: 28x28 images required");
}

void IdxDigits::next(Rng& /*rng*/, std::span<double> image784, int& digit) {
  if (pos_ >= end_) throw DataError("idx source: digit pool exhausted");
  std::copy_n(set_->images.begin() + static_cast<std::ptrdiff_t>(pos_ * 784), 784, image784.begin());
  digit = set_->labels[pos_];
  ++pos_;
}

DomainDataset make_colored_env(DigitSource& digits, const EnvironmentSpec& spec, int domain_id) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t d = 2 * 14 * 14;

  DomainDataset ds;
  ds.domain_id = domain_id;
  ds.env = spec;
  ds.num_classes = 2;
  ds.inputs = Tensor::zeros({spec.n, d});
  ds.labels.resize(spec.n);

  std::vector<double> img(784);
  for (std::size_t i = 0; i < spec.n; ++i) {
    int digit = 0;
    digits.next(rng, img, digit);
    int label = digit >= 5 ? 1 : 0;
    if (rng.bernoulli(spec.label_noise)) label = 1 - label;
    int color = rng.bernoulli(spec.agreement) ? label : 1 - label;

    double* row = ds.inputs.data() + i * d;
    for (int r = 0; r < 14; ++r) {
      for (int c = 0; c < 14; ++c) {
        double pooled = (img[(2 * r) * 28 + 2 * c] + img[(2 * r) * 28 + 2 * c + 1] + img[(2 * r + 1) * 28 + 2 * c] +
                         img[(2 * r + 1) * 28 + 2 * c + 1]) /
                        4.0;
        row[static_cast<std::size_t>(color) * 196 + static_cast<std::size_t>(r) * 14 + static_cast<std::size_t>(c)] =
            pooled;
      }
    }
    ds.labels[i] = label;
  }
  return ds;
}

DomainDataset make_two_feature_env(const EnvironmentSpec& spec, int domain_id) {
  spec.validate();
  Rng rng(spec.seed);

  DomainDataset ds;
  ds.domain_id = domain_id;
  ds.env = spec;
  ds.num_classes = 2;
  ds.inputs = Tensor::zeros({spec.n, 2});
  ds.labels.resize(spec.n);

  for (std::size_t i = 0; i < spec.n; ++i) {
    int label = static_cast<int>(rng.below(2));
    double sign = label == 1 ? 1.0 : -1.0;
    double f1 = (rng.bernoulli(0.75) ? sign : -sign) + rng.uniform(-0.1, 0.1);
    double f2 = (rng.bernoulli(spec.agreement) ? sign : -sign) + rng.uniform(-0.1, 0.1);
    ds.inputs[i * 2] = f1;
    ds.inputs[i * 2 + 1] = f2;
    ds.labels[i] = label;
  }
  return ds;
}

std::pair<DomainDataset, DomainDataset> split_head(const DomainDataset& ds, std::size_t head_n) {
  if (head_n > ds.n()) throw DataError("split_head: head larger than dataset");
  std::size_t d = ds.dim();
  DomainDataset head, tail;
  head.domain_id = tail.domain_id = ds.domain_id;
  head.env = tail.env = ds.env;
  head.num_classes = tail.num_classes = ds.num_classes;

  head.inputs = Tensor::zeros({head_n, d});
  std::copy_n(ds.inputs.data(), head_n * d, head.inputs.data());
  head.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(head_n));

  std::size_t tail_n = ds.n() - head_n;
  tail.inputs = Tensor::zeros({tail_n, d});
  std::copy_n(ds.inputs.data() + head_n * d, tail_n * d, tail.inputs.data());
  tail.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(head_n), ds.labels.end());
  return {std::move(head), std::move(tail)};
}

std::vector<DomainBatch> sample_domain_batches(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                                               Rng& rng, bool with_replacement) {
  if (batch_size == 0) throw std::invalid_argument("sample_domain_batches: batch size must be >= 1");
  std::vector<DomainBatch> out;
  out.reserve(datasets.size());
  for (const DomainDataset& ds : datasets) {
    if (ds.n() == 0) {
      throw std::invalid_argument("sample_domain_batches: empty domain " + std::to_string(ds.domain_id));
    }
    if (!with_replacement && batch_size > ds.n()) {
      throw std::invalid_argument("sample_domain_batches: batch " + std::to_string(batch_size) +
                                  " exceeds domain size " + std::to_string(ds.n()) + " without replacement");
    }
    std::vector<std::size_t> idx(batch_size);
    if (with_replacement) {
      for (std::size_t i = 0; i < batch_size; ++i) idx[i] = rng.below(ds.n());
    } else {
      std::vector<std::size_t> perm(ds.n());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::size_t j = i + rng.below(perm.size() - i);
        std::swap(perm[i], perm[j]);
        idx[i] = perm[i];
      }
    }
    DomainBatch b;
    b.domain_id = ds.domain_id;
    std::size_t d = ds.dim();
    b.inputs = Tensor::zeros({batch_size, d});
    b.labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::copy_n(ds.inputs.data() + idx[i] * d, d, b.inputs.data() + i * d);
      b.labels[i] = ds.labels[idx[i]];
    }
    out.push_back(std::move(b));
  }
  return out;
}

void write_rdmd(const std::string& path, const DomainDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("rdmd: cannot open " + path + " for writing");
  out.write("RDMD", 4);
  write_u32_le(out, 1);  // version
  write_u32_le(out, static_cast<std::uint32_t>(ds.n()));
  write_u32_le(out, static_cast<std::uint32_t>(ds.dim()));
  write_u32_le(out, static_cast<std::uint32_t>(ds.num_classes));
  out.write(reinterpret_cast<const char*>(ds.inputs.data()),
            static_cast<std::streamsize>(ds.inputs.size() * sizeof(double)));
  for (int label : ds.labels) write_u32_le(out, static_cast<std::uint32_t>(label));
  if (!out) throw DataError("rdmd: write failed for " + path);
}

DomainDataset read_rdmd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("rdmd: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RDMD", 4) != 0) throw DataError("rdmd: wrong magic in " + path);
  std::uint32_t version = read_u32_le(in, path);
  if (version != 1) throw DataError("rdmd: unsupported version " + std::to_string(version) + " in " + path);
  std::uint32_t n = read_u32_le(in, path);
  std::uint32_t d = read_u32_le(in, path);
  std::uint32_t num_classes = read_u32_le(in, path);

  DomainDataset ds;
  ds.num_classes = num_classes;
  ds.inputs = Tensor::zeros({n, d});
  in.read(reinterpret_cast<char*>(ds.inputs.data()),
          static_cast<std::streamsize>(static_cast<std::size_t>(n) * d * sizeof(double)));
  if (!in) throw DataError("rdmd: truncated file " + path);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t v = read_u32_le(in, path);
    if (v >= num_classes) throw DataError("rdmd: label out of range in " + path);
    ds.labels[i] = static_cast<int>(v);
  }
  return ds;
}

}  // namespace rdm::data
