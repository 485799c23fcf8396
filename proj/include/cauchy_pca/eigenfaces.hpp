#pragma once

// Face recognition with a robustly learned eigenface basis: corrupt pixels,
// normalize each image, recover a low-rank training matrix, take its left
// singular vectors as the basis, and classify by nearest projected neighbour.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cauchy_pca/errors.hpp"
#include "cauchy_pca/experiments.hpp"
#include "cauchy_pca/matrix.hpp"
#include "cauchy_pca/matrix_io.hpp"
#include "cauchy_pca/pcp.hpp"
#include "cauchy_pca/random.hpp"
#include "cauchy_pca/svp_solver.hpp"

namespace cpca {

/// One image per column of `data` (height * width rows, row-major pixels).
struct FaceDataset {
  DenseMatrix data;
  std::vector<std::string> labels;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t images() const noexcept { return labels.size(); }
  std::size_t pixels() const noexcept { return height * width; }

  void validate() const {
    if (data.rows() != height * width || data.cols() != labels.size()) {
      throw std::invalid_argument("FaceDataset: shape does not match height*width x labels");
    }
  }

  FaceDataset select(std::span<const std::size_t> columns) const {
    DenseMatrix sub(data.rows(), columns.size());
    std::vector<std::string> sub_labels;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      sub.mat().col(static_cast<Eigen::Index>(c)) = data.mat().col(static_cast<Eigen::Index>(columns[c]));
      sub_labels.push_back(labels.at(columns[c]));
    }
    return {std::move(sub), std::move(sub_labels), height, width};
  }
};

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary 8-bit PGM (P5) reader.
inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw UnsupportedFormatError(path.string() + ": only binary P5 PGM is supported");

  auto next_int = [&]() -> long {
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      long v = -1;
      if (!(in >> v)) throw IngestionError(path.string() + ": truncated PGM header");
      return v;
    }
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0) throw IngestionError(path.string() + ": bad PGM dimensions");
  if (maxval <= 0 || maxval > 255) {
    throw UnsupportedFormatError(path.string() + ": only 8-bit PGM is supported (maxval " + std::to_string(maxval) + ")");
  }
  in.get();  // single whitespace before the raster
  PgmImage img{static_cast<std::size_t>(w), static_cast<std::size_t>(h), {}};
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IngestionError(path.string() + ": truncated PGM raster");
  }
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const PgmImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

/// "<label>_<index>.pgm" -> label. Throws IngestionError on any other shape.
inline std::string label_from_filename(const std::filesystem::path& file) {
  const std::string stem = file.stem().string();
  const auto us = stem.rfind('_');
  if (us == std::string::npos || us == 0 || us + 1 == stem.size()) {
    throw IngestionError(file.filename().string() + ": expected <label>_<index>.pgm");
  }
  for (std::size_t i = us + 1; i < stem.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(stem[i]))) {
      throw IngestionError(file.filename().string() + ": index after '_' must be numeric");
    }
  }
  return stem.substr(0, us);
}

/// Every *.pgm file in `dir`, one column each, in lexicographic filename order.
inline FaceDataset load_pgm_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestionError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  if (files.empty()) throw IngestionError(dir.string() + ": no .pgm files");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  FaceDataset ds;
  std::vector<PgmImage> images;
  for (const auto& f : files) {
    ds.labels.push_back(label_from_filename(f));
    images.push_back(read_pgm(f));
    if (images.back().width != images.front().width || images.back().height != images.front().height) {
      throw IngestionError(f.filename().string() + ": dimensions differ from " + files.front().filename().string());
    }
  }
  ds.height = images.front().height;
  ds.width = images.front().width;
  ds.data = DenseMatrix(ds.pixels(), images.size());
  for (std::size_t c = 0; c < images.size(); ++c) {
    for (std::size_t p = 0; p < ds.pixels(); ++p) ds.data(p, c) = images[c].pixels[p];
  }
  return ds;
}

/// Pixels x images matrix file plus a labels file with one label per line.
inline FaceDataset load_matrix_dataset(const std::filesystem::path& matrix_path,
                                       const std::filesystem::path& labels_path, std::size_t height = 0,
                                       std::size_t width = 0) {
  FaceDataset ds;
  ds.data = read_matrix(matrix_path);
  std::ifstream in(labels_path);
  if (!in) throw IngestionError("cannot open " + labels_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ds.labels.push_back(line);
  }
  if (height == 0 || width == 0) {
    height = ds.data.rows();
    width = 1;
  }
  ds.height = height;
  ds.width = width;
  try {
    ds.validate();
  } catch (const std::invalid_argument& e) {
    throw IngestionError(e.what());
  }
  return ds;
}

/// Per-identity random halves; the training half gets ceil(count / 2).
inline std::pair<FaceDataset, FaceDataset> split_train_test(const FaceDataset& ds, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t c = 0; c < ds.labels.size(); ++c) by_label[ds.labels[c]].push_back(c);

  Rng rng(seed);
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& [label, cols] : by_label) {
    if (cols.size() < 2) throw std::invalid_argument("split_train_test: identity '" + label + "' has a single image");
    const auto picked = sample_without_replacement(cols.size(), (cols.size() + 1) / 2, rng);
    std::vector<bool> in_train(cols.size(), false);
    for (auto p : picked) in_train[p] = true;
    for (std::size_t i = 0; i < cols.size(); ++i) (in_train[i] ? train : test).push_back(cols[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.select(train), ds.select(test)};
}

/// Replaces round(rho * pixels) distinct pixels of each image with uniform
/// integers in [0, 255]. Image c draws from derive_seed(seed, {c}).
inline FaceDataset corrupt_pixels(const FaceDataset& ds, double rho, std::uint64_t seed,
                                  std::vector<std::vector<std::size_t>>* touched = nullptr) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("corrupt_pixels: rho must lie in [0, 1]");
  FaceDataset out = ds;
  const std::size_t pixels = ds.data.rows();
  const auto count = static_cast<std::size_t>(std::llround(rho * static_cast<double>(pixels)));
  if (touched) touched->assign(ds.data.cols(), {});
  for (std::size_t c = 0; c < ds.data.cols(); ++c) {
    Rng rng(derive_seed(seed, {c}));
    const auto idx = sample_without_replacement(pixels, count, rng);
    for (auto p : idx) out.data(p, c) = static_cast<double>(rng.below(256));
    if (touched) (*touched)[c] = idx;
  }
  return out;
}

struct ImageStats {
  double mean;
  double std;
};

struct NormalizedFaces {
  FaceDataset normalized;
  std::vector<ImageStats> stats;
};

/// Each column shifted and scaled to mean 0, population std 1.
inline NormalizedFaces normalize(const FaceDataset& ds) {
  NormalizedFaces out{ds, {}};
  const auto n = static_cast<double>(ds.data.rows());
  for (Eigen::Index c = 0; c < ds.data.mat().cols(); ++c) {
    auto col = out.normalized.data.mat().col(c);
    const double mean = col.sum() / n;
    const double sd = std::sqrt((col.array() - mean).square().sum() / n);
    if (!(sd > 0.0)) throw std::invalid_argument("normalize: image column " + std::to_string(c) + " is constant");
    col = (col.array() - mean) / sd;
    out.stats.push_back({mean, sd});
  }
  return out;
}

struct Recognizer {
  Method method = Method::Gaussian;
  DenseMatrix basis;            // pixels x k, orthonormal columns
  DenseMatrix projected_train;  // k x n_train
  std::vector<std::string> labels;
  /// The recovered low-rank training matrix.
  DenseMatrix low_rank;
};

/// Learns the basis from a normalized training set.
inline Recognizer fit_recognizer(const FaceDataset& train, Method method, std::size_t k, double gamma = 0.1,
                                 std::uint64_t seed = 0) {
  train.validate();
  const DenseMatrix& m = train.data;
  if (k < 1 || k > std::min(m.rows(), m.cols())) {
    throw std::invalid_argument("fit_recognizer: k must lie in [1, min(pixels, images)]");
  }
  Recognizer rec;
  rec.method = method;
  rec.labels = train.labels;
  TruncatedSvd factors;
  switch (method) {
    case Method::Gaussian:
      factors = truncated_svd(m, k);
      rec.low_rank = factors.reconstruct();
      break;
    case Method::Cauchy: {
      SvpConfig cfg;
      cfg.rank = k;
      cfg.model = NoiseModel::cauchy(gamma);
      cfg.seed = seed;
      auto report = solve(m, cfg);
      factors = std::move(report.factors);
      rec.low_rank = std::move(report.solution);
      break;
    }
    case Method::LaplacePcp: {
      const auto grid = default_lambda_grid(m.rows(), m.cols());
      auto tuned = tune_lambda_for_rank(m, k, grid);
      factors = truncated_svd(tuned.pcp.low_rank, k);
      rec.low_rank = std::move(tuned.pcp.low_rank);
      break;
    }
  }
  rec.basis = std::move(factors.u);
  rec.projected_train = DenseMatrix(RowMat(rec.basis.mat().transpose() * m.mat()));
  return rec;
}

struct Classification {
  std::vector<std::string> predicted;
  double accuracy = 0.0;
};

/// Nearest projected training face (Euclidean; ties go to the lower column).
inline Classification classify(const Recognizer& rec, const FaceDataset& test) {
  if (test.data.rows() != rec.basis.rows()) throw std::invalid_argument("classify: pixel count mismatch");
  const Eigen::MatrixXd projected = rec.basis.mat().transpose() * test.data.mat();
  const Eigen::MatrixXd& train = rec.projected_train.mat();
  Classification out;
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < projected.cols(); ++j) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < train.cols(); ++t) {
      const double d = (train.col(t) - projected.col(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = t;
      }
    }
    out.predicted.push_back(rec.labels[static_cast<std::size_t>(best)]);
    if (out.predicted.back() == test.labels[static_cast<std::size_t>(j)]) ++correct;
  }
  out.accuracy = test.images() ? static_cast<double>(correct) / static_cast<double>(test.images()) : 0.0;
  return out;
}

struct SyntheticFaceOptions {
  std::size_t identities = 10;
  std::size_t images_per_identity = 20;
  std::size_t height = 24;
  std::size_t width = 21;
  /// Standard deviation of the per-image Gaussian perturbation, in grey levels.
  double perturbation = 5.0;
};

/// Identity means uniform in [60, 200] per pixel smoothed by a 5x5 box blur,
/// plus per-image Gaussian perturbations, rounded and clamped to [0, 255].
/// Labels are "id00", "id01", ...; columns are grouped by identity.
inline FaceDataset make_synthetic_faces(std::uint64_t seed, const SyntheticFaceOptions& opt = {}) {
  const std::size_t h = opt.height;
  const std::size_t w = opt.width;
  Rng rng(seed);
  FaceDataset ds;
  ds.height = h;
  ds.width = w;
  ds.data = DenseMatrix(h * w, opt.identities * opt.images_per_identity);
  std::vector<double> raw(h * w);
  std::vector<double> mean(h * w);
  for (std::size_t id = 0; id < opt.identities; ++id) {
    for (double& v : raw) v = rng.uniform(60.0, 200.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double sum = 0.0;
        int count = 0;
        for (long dy = -2; dy <= 2; ++dy) {
          for (long dx = -2; dx <= 2; ++dx) {
            const long yy = static_cast<long>(y) + dy;
            const long xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
            sum += raw[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
            ++count;
          }
        }
        mean[y * w + x] = sum / count;
      }
    }
    std::string label = "id" + std::string(id < 10 ? "0" : "") + std::to_string(id);
    for (std::size_t i = 0; i < opt.images_per_identity; ++i) {
      const std::size_t col = id * opt.images_per_identity + i;
      for (std::size_t p = 0; p < h * w; ++p) {
        ds.data(p, col) = std::clamp(std::round(mean[p] + opt.perturbation * rng.normal()), 0.0, 255.0);
      }
      ds.labels.push_back(label);
    }
  }
  return ds;
}

struct FaceGridSpec {
  std::size_t k = 30;
  std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<Method> methods{Method::Gaussian, Method::LaplacePcp, Method::Cauchy};
  std::size_t replicates = 5;
  std::uint64_t seed = 0;
  double gamma = 0.1;
  bool corrupt_train_only = false;
};

struct RecognitionOutcome {
  Method method = Method::Gaussian;
  std::size_t k = 0;
  double rho = 0.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  /// NaN when the method failed on this cell.
  double accuracy = 0.0;
  std::string failure;
};

/// One (rho, replicate) trial for every method in spec.methods. The split
/// depends on the replicate only; corruption on (rho index, replicate).
inline std::vector<RecognitionOutcome> run_face_trial(const FaceDataset& ds, const FaceGridSpec& spec,
                                                      std::size_t rho_index, std::size_t replicate) {
  const double rho = spec.rho_grid.at(rho_index);
  const std::uint64_t split_seed = derive_seed(spec.seed, {0x5b17ULL, replicate});
  const std::uint64_t seed = derive_seed(spec.seed, {rho_index, replicate});
  auto [train, test] = split_train_test(ds, split_seed);
  train = corrupt_pixels(train, rho, derive_seed(seed, {0}));
  if (!spec.corrupt_train_only) test = corrupt_pixels(test, rho, derive_seed(seed, {1}));
  const auto train_n = normalize(train).normalized;
  const auto test_n = normalize(test).normalized;

  std::vector<RecognitionOutcome> out;
  for (auto method : spec.methods) {
    RecognitionOutcome o{method, spec.k, rho, replicate, seed, 0.0, {}};
    try {
      const auto rec = fit_recognizer(train_n, method, spec.k, spec.gamma, seed);
      o.accuracy = classify(rec, test_n).accuracy;
    } catch (const std::exception& e) {
      o.accuracy = std::numeric_limits<double>::quiet_NaN();
      o.failure = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// All (method, rho, replicate) outcomes in that canonical order.
inline std::vector<RecognitionOutcome> run_face_grid(const FaceDataset& ds, const FaceGridSpec& spec,
                                                     std::size_t jobs = 1) {
  if (spec.rho_grid.empty() || spec.methods.empty() || spec.replicates < 1 || spec.k < 1) {
    throw std::invalid_argument("face grid: empty grid, methods or replicates");
  }
  for (double r : spec.rho_grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("face grid: rho values must lie in [0, 1]");
  }
  const std::size_t n_rho = spec.rho_grid.size();
  const std::size_t n_rep = spec.replicates;
  const std::size_t cells = n_rho * n_rep;
  std::vector<RecognitionOutcome> results(spec.methods.size() * cells);
  auto work = [&](std::size_t cell) {
    auto per_method = run_face_trial(ds, spec, cell / n_rep, cell % n_rep);
    for (std::size_t k = 0; k < per_method.size(); ++k) results[k * cells + cell] = std::move(per_method[k]);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cells));
  if (jobs == 1) {
    for (std::size_t c = 0; c < cells; ++c) work(c);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < cells; c = next++) work(c);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

inline void write_recognition_csv(std::ostream& os, std::span<const RecognitionOutcome> rows) {
  os << "method,k,rho,replicate,seed,accuracy\n";
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << r.k << ',' << format_number(r.rho) << ',' << r.replicate << ',' << r.seed
       << ',' << format_number(r.accuracy) << '\n';
  }
}

}  // namespace cpca
