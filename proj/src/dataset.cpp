#include "xcrc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xcrc/errors.hpp"
#include "xcrc/rng.hpp"

namespace xcrc {

namespace {

using nlohmann::json;

constexpr char kBinaryMagic[8] = {'X', 'C', 'R', 'C', 'B', 'I', 'N', '1'};

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw IoError(where + ": non-numeric feature value '" +
                  std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

SampleSet load_csv_stream(std::istream& in, const std::string& name) {
  SampleSet set;
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(name + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "cam") {
    throw IoError(name + ": header must be id,cam,f0,...");
  }
  const std::size_t m = header.size() - 2;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_line(line);
    const std::string where = name + ": line " + std::to_string(lineno);
    if (fields.size() != m + 2) {
      throw IoError(where + ": expected " + std::to_string(m + 2) +
                    " fields, found " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw IoError(where + ": empty id or cam");
    }
    set.ids.emplace_back(fields[0]);
    set.cams.emplace_back(fields[1]);
    for (std::size_t k = 2; k < fields.size(); ++k) {
      if (fields[k].empty()) {
        throw IoError(where + ": empty feature column " + std::to_string(k - 2));
      }
      values.push_back(parse_double(fields[k], where));
    }
  }
  const auto n = static_cast<Eigen::Index>(set.ids.size());
  set.features.resize(n, static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < set.features.cols(); ++j) {
      set.features(i, j) = values[static_cast<std::size_t>(i) * m +
                                  static_cast<std::size_t>(j)];
    }
  }
  if (!set.features.allFinite()) {
    throw IoError(name + ": non-finite feature values");
  }
  return set;
}

SampleSet load_binary_stream(std::istream& in, const std::string& name) {
  auto read_u64 = [&](const char* what) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
      throw IoError(name + ": truncated " + what);
    }
    return v;
  };
  const std::uint64_t n = read_u64("row count");
  const std::uint64_t m = read_u64("feature count");
  SampleSet set;
  set.features.resize(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < set.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < set.features.cols(); ++j) {
      double v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw IoError(name + ": truncated feature block");
      }
      set.features(i, j) = v;
    }
  }
  auto read_string = [&](const char* what) {
    std::uint32_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), sizeof len)) {
      throw IoError(name + ": truncated " + std::string(what));
    }
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len)) {
      throw IoError(name + ": truncated " + std::string(what));
    }
    return s;
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    set.ids.push_back(read_string("id"));
    set.cams.push_back(read_string("cam"));
  }
  return set;
}

void check_sample_set(const SampleSet& set, const std::string& name) {
  if (set.ids.size() != static_cast<std::size_t>(set.n()) ||
      set.cams.size() != static_cast<std::size_t>(set.n())) {
    throw ConfigError(name + ": ids/cams/features lengths disagree");
  }
  if (!set.features.allFinite()) {
    throw ConfigError(name + ": non-finite features");
  }
}

std::string synth_id(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, index);
  return buf;
}

}  // namespace

std::string to_string(Transition t) {
  switch (t) {
    case Transition::identity:
      return "identity";
    case Transition::linear:
      return "linear";
    case Transition::tanh_nonlinear:
      return "tanh_nonlinear";
  }
  return "unknown";
}

Transition transition_from_string(const std::string& name) {
  if (name == "identity") return Transition::identity;
  if (name == "linear") return Transition::linear;
  if (name == "tanh_nonlinear") return Transition::tanh_nonlinear;
  throw ConfigError("unknown transition '" + name + "'");
}

std::string to_string(NormScheme scheme) {
  switch (scheme) {
    case NormScheme::none:
      return "none";
    case NormScheme::unit_l2:
      return "unit_l2";
    case NormScheme::unit_l1_nonneg:
      return "unit_l1_nonneg";
  }
  return "unknown";
}

NormScheme norm_scheme_from_string(const std::string& name) {
  if (name == "none") return NormScheme::none;
  if (name == "unit_l2") return NormScheme::unit_l2;
  if (name == "unit_l1_nonneg") return NormScheme::unit_l1_nonneg;
  throw ConfigError("unknown normalization scheme '" + name + "'");
}

SampleSet load_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  char magic[8] = {};
  in.read(magic, sizeof magic);
  const bool binary =
      in.gcount() == 8 && std::memcmp(magic, kBinaryMagic, 8) == 0;
  SampleSet set;
  if (binary) {
    set = load_binary_stream(in, path.filename().string());
  } else {
    in.clear();
    in.seekg(0);
    set = load_csv_stream(in, path.filename().string());
  }
  check_sample_set(set, path.filename().string());
  return set;
}

void save_csv(const SampleSet& set, const std::filesystem::path& path) {
  check_sample_set(set, "save_csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
  out << "id,cam";
  for (Eigen::Index j = 0; j < set.dim(); ++j) out << ",f" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < set.n(); ++i) {
    out << set.ids[static_cast<std::size_t>(i)] << ','
        << set.cams[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      out << ',' << format_double(set.features(i, j));
    }
    out << "\n";
  }
  if (!out) {
    throw IoError("write failed for '" + path.string() + "'");
  }
}

void save_binary(const SampleSet& set, const std::filesystem::path& path) {
  check_sample_set(set, "save_binary");
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
  out.write(kBinaryMagic, sizeof kBinaryMagic);
  const std::uint64_t n = static_cast<std::uint64_t>(set.n());
  const std::uint64_t m = static_cast<std::uint64_t>(set.dim());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  for (Eigen::Index i = 0; i < set.n(); ++i) {
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      const double v = set.features(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  auto write_string = [&](const std::string& s) {
    const auto len = static_cast<std::uint32_t>(s.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  };
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    write_string(set.ids[i]);
    write_string(set.cams[i]);
  }
  if (!out) {
    throw IoError("write failed for '" + path.string() + "'");
  }
}

CrossViewDataset pair_views(const SampleSet& set, const std::string& cam_a,
                            const std::string& cam_b, bool single_shot) {
  check_sample_set(set, "pair_views");
  if (cam_a == cam_b) {
    throw ConfigError("pair_views: cameras must differ");
  }
  std::map<std::string, std::vector<Eigen::Index>> rows_a, rows_b;
  bool saw_a = false, saw_b = false;
  for (Eigen::Index i = 0; i < set.n(); ++i) {
    const auto& cam = set.cams[static_cast<std::size_t>(i)];
    const auto& id = set.ids[static_cast<std::size_t>(i)];
    if (cam == cam_a) {
      rows_a[id].push_back(i);
      saw_a = true;
    } else if (cam == cam_b) {
      rows_b[id].push_back(i);
      saw_b = true;
    }
  }
  if (!saw_a || !saw_b) {
    throw ConfigError("pair_views: camera '" +
                      (saw_a ? cam_b : cam_a) + "' has no rows");
  }
  if (single_shot) {
    for (const auto& [id, rows] : rows_a) {
      if (rows.size() > 1) {
        throw ConfigError("pair_views: identity '" + id +
                          "' has multiple rows in camera '" + cam_a +
                          "' under single-shot");
      }
    }
    for (const auto& [id, rows] : rows_b) {
      if (rows.size() > 1) {
        throw ConfigError("pair_views: identity '" + id +
                          "' has multiple rows in camera '" + cam_b +
                          "' under single-shot");
      }
    }
  }

  CrossViewDataset out;
  std::vector<Eigen::Index> order_a, order_b;
  for (const auto& [id, rows] : rows_a) {
    auto it = rows_b.find(id);
    if (it == rows_b.end()) {
      throw ConfigError("pair_views: identity '" + id +
                        "' appears only in probe camera '" + cam_a + "'");
    }
    order_a.insert(order_a.end(), rows.begin(), rows.end());
    order_b.insert(order_b.end(), it->second.begin(), it->second.end());
  }
  for (const auto& [id, rows] : rows_b) {
    if (!rows_a.contains(id)) {
      out.distractor_ids.push_back(id);
      order_b.insert(order_b.end(), rows.begin(), rows.end());
    }
  }

  auto take = [&](const std::vector<Eigen::Index>& order) {
    SampleSet view;
    view.features.resize(static_cast<Eigen::Index>(order.size()), set.dim());
    for (std::size_t k = 0; k < order.size(); ++k) {
      view.ids.push_back(set.ids[static_cast<std::size_t>(order[k])]);
      view.cams.push_back(set.cams[static_cast<std::size_t>(order[k])]);
      view.features.row(static_cast<Eigen::Index>(k)) =
          set.features.row(order[k]);
    }
    return view;
  };
  out.view_a = take(order_a);
  out.view_b = take(order_b);
  return out;
}

CrossViewDataset synth_generate(const SynthConfig& config) {
  if (config.n_identities < 2) {
    throw ConfigError("synth_generate: need at least 2 identities");
  }
  if (config.m_dim < 1) {
    throw ConfigError("synth_generate: dimension must be positive");
  }
  if (config.noise_sigma < 0.0) {
    throw ConfigError("synth_generate: noise_sigma must be nonnegative");
  }
  if (config.n_distractors < 0) {
    throw ConfigError("synth_generate: n_distractors must be nonnegative");
  }

  const Eigen::Index m = config.m_dim;
  Rng rng(config.seed);

  // Transition map: orthogonal factor of a random Gaussian matrix, so the
  // linear map is always invertible and well conditioned.
  Eigen::MatrixXd map = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(m);
  if (config.transition != Transition::identity) {
    Eigen::MatrixXd g(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < m; ++i) g(i, j) = rng.normal();
    }
    map = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    if (config.transition == Transition::tanh_nonlinear) {
      for (Eigen::Index i = 0; i < m; ++i) bias[i] = rng.normal();
    }
  }

  auto transition = [&](const Eigen::VectorXd& a) -> Eigen::VectorXd {
    switch (config.transition) {
      case Transition::identity:
        return a;
      case Transition::linear:
        return map * a;
      case Transition::tanh_nonlinear:
        return (map * a + bias).array().tanh();
    }
    return a;
  };

  auto draw_row = [&](Eigen::VectorXd& v) {
    for (Eigen::Index k = 0; k < m; ++k) v[k] = rng.normal();
  };

  CrossViewDataset out;
  out.view_a.features.resize(config.n_identities, m);
  out.view_b.features.resize(config.n_identities + config.n_distractors, m);

  Eigen::VectorXd latent(m), noise(m);
  for (int i = 0; i < config.n_identities; ++i) {
    draw_row(latent);
    draw_row(noise);
    const std::string id = synth_id("p", i + 1);
    out.view_a.ids.push_back(id);
    out.view_a.cams.push_back("a");
    out.view_a.features.row(i) = latent.transpose();
    out.view_b.ids.push_back(id);
    out.view_b.cams.push_back("b");
    out.view_b.features.row(i) =
        (transition(latent) + config.noise_sigma * noise).transpose();
  }
  for (int i = 0; i < config.n_distractors; ++i) {
    draw_row(latent);
    draw_row(noise);
    const std::string id = synth_id("d", i + 1);
    out.distractor_ids.push_back(id);
    out.view_b.ids.push_back(id);
    out.view_b.cams.push_back("b");
    out.view_b.features.row(config.n_identities + i) =
        (transition(latent) + config.noise_sigma * noise).transpose();
  }
  return out;
}

NormalizeResult normalize(const SampleSet& set, NormScheme scheme) {
  check_sample_set(set, "normalize");
  NormalizeResult result;
  result.set = set;
  if (scheme == NormScheme::none) return result;
  if (scheme == NormScheme::unit_l1_nonneg && set.features.minCoeff() < 0.0) {
    throw ConfigError("normalize: unit_l1_nonneg requires nonnegative "
                      "features");
  }
  for (Eigen::Index i = 0; i < set.n(); ++i) {
    const double norm = scheme == NormScheme::unit_l2
                            ? result.set.features.row(i).norm()
                            : result.set.features.row(i).sum();
    if (norm > 0.0) {
      result.set.features.row(i) /= norm;
    } else {
      result.zero_rows.push_back(i);
    }
  }
  return result;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open manifest '" + path.string() + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("manifest '" + path.string() + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.camera_a = j.at("camera_a").get<std::string>();
    m.camera_b = j.at("camera_b").get<std::string>();
    m.files = j.at("files").get<std::vector<std::string>>();
    m.normalization =
        norm_scheme_from_string(j.value("normalization", std::string("none")));
    m.single_shot = j.value("single_shot", true);
    if (j.contains("distractor_ids")) {
      m.distractor_ids = j.at("distractor_ids").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw IoError("manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
  json j{{"camera_a", manifest.camera_a},
         {"camera_b", manifest.camera_b},
         {"files", manifest.files},
         {"normalization", to_string(manifest.normalization)},
         {"single_shot", manifest.single_shot},
         {"distractor_ids", manifest.distractor_ids}};
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write manifest '" + path.string() + "'");
  }
  out << j.dump(2) << "\n";
  if (!out) {
    throw IoError("write failed for '" + path.string() + "'");
  }
}

CrossViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  if (manifest.files.empty()) {
    throw ConfigError("manifest lists no feature files");
  }
  const auto dir = manifest_path.parent_path();
  SampleSet all;
  for (const auto& rel : manifest.files) {
    SampleSet part = load_samples(dir / rel);
    if (all.n() == 0) {
      all = std::move(part);
      continue;
    }
    if (part.dim() != all.dim()) {
      throw ConfigError("feature files disagree on dimension");
    }
    const Eigen::Index old_n = all.n();
    all.features.conservativeResize(old_n + part.n(), all.dim());
    all.features.bottomRows(part.n()) = part.features;
    all.ids.insert(all.ids.end(), part.ids.begin(), part.ids.end());
    all.cams.insert(all.cams.end(), part.cams.begin(), part.cams.end());
  }
  all = normalize(all, manifest.normalization).set;
  CrossViewDataset ds =
      pair_views(all, manifest.camera_a, manifest.camera_b,
                 manifest.single_shot);
  if (!manifest.distractor_ids.empty()) {
    std::set<std::string> listed(manifest.distractor_ids.begin(),
                                 manifest.distractor_ids.end());
    std::set<std::string> derived(ds.distractor_ids.begin(),
                                  ds.distractor_ids.end());
    if (listed != derived) {
      throw ConfigError("manifest distractor_ids disagree with the data");
    }
  }
  return ds;
}

}  // namespace xcrc
