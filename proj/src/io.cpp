#include "asymseg/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include "asymseg/rng.hpp"

namespace asymseg {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void read_field(const json& j, const std::string& where, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const BlobParams& p) {
  return json{{"min_blobs", p.min_blobs},       {"max_blobs", p.max_blobs},
              {"min_radius", p.min_radius},     {"max_radius", p.max_radius},
              {"min_offset", p.min_offset},     {"max_offset", p.max_offset},
              {"signed_offsets", p.signed_offsets}, {"blob_noise", p.blob_noise}};
}

BlobParams blob_params_from_json(const json& j) {
  require_keys(j, "data.blobs",
               {"min_blobs", "max_blobs", "min_radius", "max_radius", "min_offset",
                "max_offset", "signed_offsets", "blob_noise"});
  BlobParams p;
  read_field(j, "data.blobs", "min_blobs", p.min_blobs);
  read_field(j, "data.blobs", "max_blobs", p.max_blobs);
  read_field(j, "data.blobs", "min_radius", p.min_radius);
  read_field(j, "data.blobs", "max_radius", p.max_radius);
  read_field(j, "data.blobs", "min_offset", p.min_offset);
  read_field(j, "data.blobs", "max_offset", p.max_offset);
  read_field(j, "data.blobs", "signed_offsets", p.signed_offsets);
  read_field(j, "data.blobs", "blob_noise", p.blob_noise);
  return p;
}

json to_json(const SynthConfig& c) {
  return json{{"seed", c.seed},
              {"n_train_cases", c.n_train_cases},
              {"n_test_cases", c.n_test_cases},
              {"image_size", c.image_size},
              {"patch_size", c.patch_size},
              {"blobs", to_json(c.blobs)},
              {"class_sampling_ratio", c.class_sampling_ratio},
              {"train_patches_per_case", c.train_patches_per_case},
              {"test_patches_per_case", c.test_patches_per_case}};
}

SynthConfig synth_config_from_json(const json& j) {
  require_keys(j, "data",
               {"seed", "n_train_cases", "n_test_cases", "image_size", "patch_size", "blobs",
                "class_sampling_ratio", "train_patches_per_case", "test_patches_per_case"});
  SynthConfig c;
  read_field(j, "data", "seed", c.seed);
  read_field(j, "data", "n_train_cases", c.n_train_cases);
  read_field(j, "data", "n_test_cases", c.n_test_cases);
  read_field(j, "data", "image_size", c.image_size);
  read_field(j, "data", "patch_size", c.patch_size);
  if (j.contains("blobs")) c.blobs = blob_params_from_json(j.at("blobs"));
  read_field(j, "data", "class_sampling_ratio", c.class_sampling_ratio);
  read_field(j, "data", "train_patches_per_case", c.train_patches_per_case);
  read_field(j, "data", "test_patches_per_case", c.test_patches_per_case);
  return c;
}

json to_json(const ModelConfig& c) {
  return json{{"input_dim", c.input_dim}, {"hidden_widths", c.hidden_widths}};
}

ModelConfig model_config_from_json(const json& j) {
  require_keys(j, "model", {"input_dim", "hidden_widths"});
  ModelConfig c;
  read_field(j, "model", "input_dim", c.input_dim);
  read_field(j, "model", "hidden_widths", c.hidden_widths);
  return c;
}

json to_json(const LossConfig& c) {
  json combine = json::array();
  for (LossVariant v : c.combine) combine.push_back(variant_name(v));
  return json{{"variant", variant_name(c.variant)},
              {"asymmetric", c.asymmetric},
              {"rare_class", c.rare_class},
              {"margin", c.margin},
              {"gamma", c.gamma},
              {"epsilon", c.epsilon},
              {"magnitude", c.magnitude},
              {"mixup_alpha", c.mixup_alpha},
              {"mixup_margin", c.mixup_margin},
              {"focal_modulator_constant", c.focal_modulator_constant},
              {"combine", combine}};
}

LossConfig loss_config_from_json(const json& j) {
  require_keys(j, "loss",
               {"variant", "asymmetric", "rare_class", "margin", "gamma", "epsilon",
                "magnitude", "mixup_alpha", "mixup_margin", "focal_modulator_constant",
                "combine"});
  LossConfig c;
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  read_field(j, "loss", "asymmetric", c.asymmetric);
  read_field(j, "loss", "rare_class", c.rare_class);
  read_field(j, "loss", "margin", c.margin);
  read_field(j, "loss", "gamma", c.gamma);
  read_field(j, "loss", "epsilon", c.epsilon);
  read_field(j, "loss", "magnitude", c.magnitude);
  read_field(j, "loss", "mixup_alpha", c.mixup_alpha);
  read_field(j, "loss", "mixup_margin", c.mixup_margin);
  read_field(j, "loss", "focal_modulator_constant", c.focal_modulator_constant);
  if (j.contains("combine")) {
    c.combine.clear();
    for (const auto& name : j.at("combine"))
      c.combine.push_back(variant_from_name(name.get<std::string>()));
  }
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"loss", to_json(c.loss)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"batches_per_epoch", c.batches_per_epoch},
              {"learning_rate", c.learning_rate},
              {"lr_decay", c.lr_decay},
              {"momentum", c.momentum},
              {"mixup_fraction", c.mixup_fraction},
              {"class_sampling_ratio", c.class_sampling_ratio},
              {"data_fraction", c.data_fraction},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  require_keys(j, "train",
               {"loss", "epochs", "batch_size", "batches_per_epoch", "learning_rate",
                "lr_decay", "momentum", "mixup_fraction", "class_sampling_ratio",
                "data_fraction", "seed"});
  TrainConfig c;
  if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
  read_field(j, "train", "epochs", c.epochs);
  read_field(j, "train", "batch_size", c.batch_size);
  read_field(j, "train", "batches_per_epoch", c.batches_per_epoch);
  read_field(j, "train", "learning_rate", c.learning_rate);
  read_field(j, "train", "lr_decay", c.lr_decay);
  read_field(j, "train", "momentum", c.momentum);
  read_field(j, "train", "mixup_fraction", c.mixup_fraction);
  read_field(j, "train", "class_sampling_ratio", c.class_sampling_ratio);
  read_field(j, "train", "data_fraction", c.data_fraction);
  read_field(j, "train", "seed", c.seed);
  return c;
}

std::string canonical_dump(const json& j) { return j.dump(); }

std::uint64_t hash_json(const json& j) { return fnv1a64(canonical_dump(j)); }

std::uint64_t dataset_config_hash(const SynthConfig& c) { return hash_json(to_json(c)); }

// ---- binary helpers --------------------------------------------------------

namespace {

constexpr char kDatasetMagic[8] = {'A', 'S', 'E', 'G', 'D', 'S', '0', '1'};
constexpr char kModelMagic[8] = {'A', 'S', 'E', 'G', 'M', 'D', '0', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on '" + path_.string() + "'");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void f64_array(const std::vector<double>& v) {
    u64(v.size());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(double));
  }
  void u8_array(const std::vector<std::uint8_t>& v) {
    u64(v.size());
    if (!v.empty()) bytes(v.data(), v.size());
  }
  void str(const std::string& s) {
    u64(s.size());
    if (!s.empty()) bytes(s.data(), s.size());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "' for reading");
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("truncated file '" + path_.string() + "'");
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::vector<double> f64_array() {
    std::vector<double> v(checked_count());
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(double));
    return v;
  }
  std::vector<std::uint8_t> u8_array() {
    std::vector<std::uint8_t> v(checked_count());
    if (!v.empty()) bytes(v.data(), v.size());
    return v;
  }
  std::string str() {
    std::string s(checked_count(), '\0');
    if (!s.empty()) bytes(s.data(), s.size());
    return s;
  }

 private:
  std::size_t checked_count() {
    std::uint64_t n = u64();
    if (n > (1ULL << 33))
      throw IoError("implausible record size in '" + path_.string() + "'");
    return static_cast<std::size_t>(n);
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

void write_patch_set(Writer& w, const PatchSet& set) {
  w.u8(set.split == Split::kTest ? 1 : 0);
  w.f64(set.fraction);
  w.f64(set.fg_ratio);
  w.u64(set.samples.size());
  for (const Sample& s : set.samples) {
    w.i32(s.case_id);
    w.u8(static_cast<std::uint8_t>(s.label));
    w.i32(s.cx);
    w.i32(s.cy);
    w.f64_array(s.patch);
  }
}

PatchSet read_patch_set(Reader& r) {
  PatchSet set;
  set.split = r.u8() ? Split::kTest : Split::kTrain;
  set.fraction = r.f64();
  set.fg_ratio = r.f64();
  std::uint64_t n = r.u64();
  set.samples.resize(static_cast<std::size_t>(n));
  for (Sample& s : set.samples) {
    s.case_id = r.i32();
    s.label = r.u8();
    s.cx = r.i32();
    s.cy = r.i32();
    s.patch = r.f64_array();
  }
  return set;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kDatasetMagic, sizeof(kDatasetMagic));
  w.u32(1);  // version
  w.u64(dataset.config.seed);
  w.u64(dataset_config_hash(dataset.config));
  w.str(canonical_dump(to_json(dataset.config)));
  w.f64(dataset.norm_mean);
  w.f64(dataset.norm_std);
  w.u32(static_cast<std::uint32_t>(dataset.cases.size()));
  for (const CaseImage& c : dataset.cases) {
    w.i32(c.case_id);
    w.u8(c.split == Split::kTest ? 1 : 0);
    w.i32(c.size);
    w.u32(static_cast<std::uint32_t>(c.blobs.size()));
    for (const Blob& b : c.blobs) {
      w.f64(b.cx);
      w.f64(b.cy);
      w.f64(b.a);
      w.f64(b.b);
      w.f64(b.angle);
    }
    w.f64_array(c.pixels);
    w.u8_array(c.mask);
  }
  write_patch_set(w, dataset.train);
  write_patch_set(w, dataset.test);
}

Dataset load_dataset(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw IoError("'" + path.string() + "' is not a dataset container");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError("unsupported dataset container version " + std::to_string(version));
  Dataset ds;
  std::uint64_t seed = r.u64();
  std::uint64_t stored_hash = r.u64();
  std::string config_text = r.str();
  ds.config = synth_config_from_json(json::parse(config_text));
  if (ds.config.seed != seed || dataset_config_hash(ds.config) != stored_hash)
    throw IoError("dataset header hash mismatch in '" + path.string() + "'");
  ds.norm_mean = r.f64();
  ds.norm_std = r.f64();
  std::uint32_t n_cases = r.u32();
  ds.cases.resize(n_cases);
  for (CaseImage& c : ds.cases) {
    c.case_id = r.i32();
    c.split = r.u8() ? Split::kTest : Split::kTrain;
    c.size = r.i32();
    std::uint32_t n_blobs = r.u32();
    c.blobs.resize(n_blobs);
    for (Blob& b : c.blobs) {
      b.cx = r.f64();
      b.cy = r.f64();
      b.a = r.f64();
      b.b = r.f64();
      b.angle = r.f64();
    }
    c.pixels = r.f64_array();
    c.mask = r.u8_array();
  }
  ds.train = read_patch_set(r);
  ds.test = read_patch_set(r);
  return ds;
}

json dataset_manifest(const Dataset& dataset) {
  std::size_t train_cases = 0, test_cases = 0;
  for (const CaseImage& c : dataset.cases)
    (c.split == Split::kTrain ? train_cases : test_cases)++;
  double pixel_fg = 0.0;
  for (const CaseImage& c : dataset.cases) pixel_fg += c.fg_fraction();
  pixel_fg /= static_cast<double>(dataset.cases.size());
  return json{{"schema_version", 1},
              {"config", to_json(dataset.config)},
              {"config_hash", dataset_config_hash(dataset.config)},
              {"seed", dataset.config.seed},
              {"n_cases", dataset.cases.size()},
              {"n_train_cases", train_cases},
              {"n_test_cases", test_cases},
              {"n_train_samples", dataset.train.samples.size()},
              {"n_test_samples", dataset.test.samples.size()},
              {"train_fg_ratio", dataset.train.fg_ratio},
              {"test_fg_ratio", dataset.test.fg_ratio},
              {"mean_pixel_fg_fraction", pixel_fg},
              {"norm_mean", dataset.norm_mean},
              {"norm_std", dataset.norm_std}};
}

std::uint64_t model_fingerprint(const ModelConfig& model_config,
                                const TrainConfig& train_config,
                                std::uint64_t dataset_hash) {
  json j{{"model", to_json(model_config)},
         {"train", to_json(train_config)},
         {"dataset_hash", dataset_hash}};
  return hash_json(j);
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kModelMagic, sizeof(kModelMagic));
  w.u32(1);  // version
  w.u64(model.fingerprint);
  w.u64(model.dataset_hash);
  w.str(canonical_dump(to_json(model.model_config)));
  w.str(canonical_dump(to_json(model.train_config)));
  w.f64_array(model.params);
  w.f64_array(model.loss_trace);
}

TrainedModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw IoError("'" + path.string() + "' is not a model container");
  std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError("unsupported model container version " + std::to_string(version));
  TrainedModel m;
  m.fingerprint = r.u64();
  m.dataset_hash = r.u64();
  m.model_config = model_config_from_json(json::parse(r.str()));
  m.train_config = train_config_from_json(json::parse(r.str()));
  m.params = r.f64_array();
  m.loss_trace = r.f64_array();
  if (model_fingerprint(m.model_config, m.train_config, m.dataset_hash) != m.fingerprint)
    throw IoError("model fingerprint mismatch in '" + path.string() + "'");
  return m;
}

std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "epoch,mean_loss\n";
  char line[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.10g\n", i, trace[i]);
    out += line;
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace asymseg
