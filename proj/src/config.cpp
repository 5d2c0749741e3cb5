#include "mncd/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "mncd/registry.hpp"

namespace mncd {
using json = nlohmann::ordered_json;

namespace {

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* field(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join_path(path_, key); }

  void read(const std::string& key, std::string& out) {
    if (const json* v = field(key)) {
      if (!v->is_string()) type_error(key, "a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = field(key)) {
      if (!v->is_boolean()) type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = field(key)) {
      if (!v->is_number()) type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, std::int64_t& out) {
    if (const json* v = field(key)) {
      if (!v->is_number_integer()) type_error(key, "an integer");
      out = v->get<std::int64_t>();
    }
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = field(key)) {
      if (!v->is_number_unsigned()) type_error(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  template <typename T, std::size_t N>
  void read(const std::string& key, std::array<T, N>& out) {
    if (const json* v = field(key)) {
      if (!v->is_array() || v->size() != N) {
        type_error(key, "an array of " + std::to_string(N) + " numbers");
      }
      for (std::size_t i = 0; i < N; ++i) {
        if (!check_number<T>((*v)[i])) type_error(key + "[" + std::to_string(i) + "]", "a number");
        out[i] = (*v)[i].get<T>();
      }
    }
  }
  template <typename T>
  void read(const std::string& key, std::vector<T>& out) {
    if (const json* v = field(key)) {
      if (!v->is_array()) type_error(key, "an array");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!check_number<T>((*v)[i])) {
          type_error(key + "[" + std::to_string(i) + "]", "an integer");
        }
        out.push_back((*v)[i].get<T>());
      }
    }
  }

  void finish() const {
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }
  }

 private:
  template <typename T>
  static bool check_number(const json& v) {
    if constexpr (std::is_integral_v<T>) return v.is_number_integer();
    return v.is_number();
  }

  [[noreturn]] void type_error(const std::string& key, const std::string& expected) const {
    throw ConfigError("config field '" + path(key) + "' must be " + expected);
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' must look like key=value");
  }
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
    if (!node->is_object()) {
      throw ConfigError("override key '" + key + "' descends into a non-object");
    }
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig c;
  ObjectReader root(doc, "");
  if (!root.has("model_id")) throw ConfigError("config field 'model_id' is required");
  root.read("model_id", c.model_id);
  if (!model_registry().contains(c.model_id)) model_registry().resolve(c.model_id);
  root.read("dataset_id", c.dataset_id);
  root.read("dataset_root", c.dataset_root);
  root.read("use_changefft", c.model.use_changefft);
  root.read("output_dir", c.output_dir);
  root.read("split_ratios", c.split_ratios);

  if (c.model_id == "minenetcd-resnet18") c.model.encoder.blocks = {2, 2, 2, 2};
  if (const json* enc = root.field("encoder")) {
    ObjectReader r(*enc, root.path("encoder"));
    r.read("backbone", c.model.encoder.backbone);
    r.read("base_channels", c.model.encoder.base_channels);
    r.read("blocks", c.model.encoder.blocks);
    r.finish();
  }
  if (const json* dec = root.field("decoder")) {
    ObjectReader r(*dec, root.path("decoder"));
    r.read("fpn_channels", c.model.decoder.fpn_channels);
    r.read("ppm_scales", c.model.decoder.ppm_scales);
    r.finish();
  }
  if (const json* syn = root.field("synthetic")) {
    ObjectReader r(*syn, root.path("synthetic"));
    r.read("num_pairs", c.synthetic.num_pairs);
    r.read("size", c.synthetic.size);
    r.read("change_fraction", c.synthetic.change_fraction);
    r.read("num_sites", c.synthetic.num_sites);
    r.finish();
  }
  if (const json* tr = root.field("train")) {
    ObjectReader r(*tr, root.path("train"));
    r.read("lr_max", c.train.lr_max);
    r.read("lr_min", c.train.lr_min);
    r.read("beta1", c.train.beta1);
    r.read("beta2", c.train.beta2);
    r.read("eps", c.train.eps);
    r.read("batch_size", c.train.batch_size);
    r.read("total_steps", c.train.total_steps);
    r.read("seed", c.train.seed);
    r.finish();
  }
  root.finish();

  if (c.dataset_id.empty()) {
    if (c.dataset_root.empty()) {
      throw ConfigError("config needs 'dataset_id' or 'dataset_root'");
    }
    c.dataset_id = "folder";
  }
  if (!dataset_registry().contains(c.dataset_id)) dataset_registry().resolve(c.dataset_id);
  if (c.output_dir.empty()) c.output_dir = "runs/" + c.model_id;
  if (c.dataset_root.empty()) {
    if (c.dataset_id != "synthetic") {
      throw ConfigError("dataset '" + c.dataset_id + "' needs 'dataset_root'");
    }
    c.dataset_root = c.output_dir + "/dataset";
  }

  c.model.encoder.validate();
  c.model.decoder.validate();
  c.train.validate();
  if (c.synthetic.num_pairs < 1) throw ConfigError("synthetic.num_pairs must be >= 1");
  if (c.synthetic.size < 32 || c.synthetic.size % 32 != 0) {
    throw ConfigError("synthetic.size must be a positive multiple of 32");
  }
  if (!(c.synthetic.change_fraction > 0 && c.synthetic.change_fraction < 1)) {
    throw ConfigError("synthetic.change_fraction must lie in (0, 1)");
  }
  if (c.synthetic.num_sites < 0) throw ConfigError("synthetic.num_sites must be >= 0");
  double ratio_sum = 0;
  for (double r : c.split_ratios) {
    if (r < 0) throw ConfigError("split_ratios entries must be non-negative");
    ratio_sum += r;
  }
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("split_ratios must sum to 1");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot read config");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["model_id"] = model_id;
  j["dataset_id"] = dataset_id;
  j["dataset_root"] = dataset_root;
  j["use_changefft"] = model.use_changefft;
  j["encoder"] = {{"backbone", model.encoder.backbone},
                  {"base_channels", model.encoder.base_channels},
                  {"blocks", model.encoder.blocks}};
  j["decoder"] = {{"fpn_channels", model.decoder.fpn_channels},
                  {"ppm_scales", model.decoder.ppm_scales}};
  j["synthetic"] = {{"num_pairs", synthetic.num_pairs},
                    {"size", synthetic.size},
                    {"change_fraction", synthetic.change_fraction},
                    {"num_sites", synthetic.num_sites}};
  j["split_ratios"] = split_ratios;
  j["train"] = {{"lr_max", train.lr_max},         {"lr_min", train.lr_min},
                {"beta1", train.beta1},           {"beta2", train.beta2},
                {"eps", train.eps},               {"batch_size", train.batch_size},
                {"total_steps", train.total_steps}, {"seed", train.seed}};
  j["output_dir"] = output_dir;
  return j.dump(2);
}

SyntheticOptions ExperimentConfig::synthetic_options() const {
  SyntheticOptions o;
  o.num_pairs = synthetic.num_pairs;
  o.size = synthetic.size;
  o.change_fraction = synthetic.change_fraction;
  o.seed = train.seed;
  o.num_sites = synthetic.num_sites;
  o.ratios = split_ratios;
  return o;
}

}  // namespace mncd
