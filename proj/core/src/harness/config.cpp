#include "ash/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ash/errors.hpp"

namespace ash::harness {

namespace {

using nlohmann::json;

void read(const json& v, const std::string& key, std::uint64_t& out) {
  if (!v.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer, got " + v.dump());
  out = v.get<std::uint64_t>();
}

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as uint64");

void read(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) throw ConfigError(key, "expected a number, got " + v.dump());
  out = v.get<double>();
}

void read(const json& v, const std::string& key, bool& out) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false, got " + v.dump());
  out = v.get<bool>();
}

void read(const json& v, const std::string& key, std::string& out) {
  if (!v.is_string()) throw ConfigError(key, "expected a string, got " + v.dump());
  out = v.get<std::string>();
}

template <class T>
void read(const json& v, const std::string& key, std::vector<T>& out) {
  if (!v.is_array()) throw ConfigError(key, "expected an array, got " + v.dump());
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T item{};
    read(v[i], key + "[" + std::to_string(i) + "]", item);
    out.push_back(item);
  }
}

void read(const json& v, const std::string& key, std::vector<bool>& out) {
  if (!v.is_array()) throw ConfigError(key, "expected an array, got " + v.dump());
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    bool item = false;
    read(v[i], key + "[" + std::to_string(i) + "]", item);
    out.push_back(item);
  }
}

// Calls f(key, field) for every scalar field in declaration order.
template <class Config, class F>
void for_each_field(Config& c, F&& f) {
  f("seed", c.seed);
  f("dataset_size", c.dataset_size);
  f("num_clusters", c.num_clusters);
  f("image_size", c.image_size);
  f("holdout_fraction", c.holdout_fraction);
  f("eval_size", c.eval_size);
  f("T", c.T);
  f("retrieve_count", c.retrieve_count);
  f("batch_size", c.batch_size);
  f("epochs", c.epochs);
  f("warmup_epochs", c.warmup_epochs);
  f("sr_mode", c.sr_mode);
  f("collector_enabled", c.collector_enabled);
  f("M1", c.M1);
  f("M2", c.M2);
  f("snn_hidden", c.snn_hidden);
  f("patch_stride", c.patch_stride);
  f("lif_leak", c.lif_leak);
  f("lif_threshold", c.lif_threshold);
  f("surrogate_width", c.surrogate_width);
  f("d_model", c.d_model);
  f("heads", c.heads);
  f("ff_dim", c.ff_dim);
  f("layers", c.layers);
  f("max_seq_len", c.max_seq_len);
  f("d_align", c.d_align);
  f("temperature", c.temperature);
  f("queue_capacity", c.queue_capacity);
  f("mask_rate", c.mask_rate);
  f("lr_transformer", c.lr_transformer);
  f("lr_fusion", c.lr_fusion);
  f("lr_cnn", c.lr_cnn);
  f("lr_snn", c.lr_snn);
  f("lr_collector", c.lr_collector);
  f("momentum", c.momentum);
  f("weight_decay", c.weight_decay);
}

template <class Sweep, class F>
void for_each_axis(Sweep& s, F&& f) {
  f("T", s.T);
  f("retrieve_count", s.retrieve_count);
  f("sr_mode", s.sr_mode);
  f("collector_enabled", s.collector_enabled);
  f("seeds", s.seeds);
}

void apply_object(RunConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    bool known = false;
    if (key == "sweep") {
      if (!it.value().is_object()) throw ConfigError("sweep", "expected an object of axis -> values");
      for (auto ax = it.value().begin(); ax != it.value().end(); ++ax) {
        bool axis_known = false;
        for_each_axis(cfg.sweep, [&](const char* name, auto& field) {
          if (ax.key() == name) {
            read(ax.value(), "sweep." + ax.key(), field);
            axis_known = true;
          }
        });
        if (!axis_known) throw ConfigError("sweep." + ax.key(), "unknown sweep axis");
      }
      continue;
    }
    for_each_field(cfg, [&](const char* name, auto& field) {
      if (key == name) {
        read(it.value(), key, field);
        known = true;
      }
    });
    if (!known) throw ConfigError(key, "unknown configuration key");
  }
}

json parse_json(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin, std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
}

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

std::size_t RunConfig::holdout_count() const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(dataset_size) * holdout_fraction));
}

void RunConfig::validate() const {
  require(dataset_size >= 2, "dataset_size", "must be at least 2");
  require(num_clusters >= 1 && num_clusters <= 48, "num_clusters", "must lie in [1, 48]");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction", "must lie in (0, 1)");
  require(holdout_count() >= 1, "holdout_fraction", "leaves no held-out pairs");
  require(train_count() >= 2, "holdout_fraction", "leaves fewer than 2 training pairs");
  require(eval_size >= 1 && eval_size <= holdout_count(), "eval_size",
          "must lie in [1, " + std::to_string(holdout_count()) + "] (held-out pairs)");
  require(image_size >= 16 && image_size % 2 == 0, "image_size", "must be even and at least 16");
  require(patch_stride >= 4 && patch_stride % 4 == 0, "patch_stride", "must be a positive multiple of 4");
  require(image_size % patch_stride == 0, "patch_stride", "must divide image_size");
  require(T >= 1, "T", "must be at least 1");
  require(batch_size >= 2, "batch_size", "must be at least 2");
  require(retrieve_count >= 1 && retrieve_count <= batch_size, "retrieve_count", "must lie in [1, batch_size]");
  require(retrieve_count <= train_count(), "retrieve_count", "exceeds the number of training pairs");
  require(epochs >= 1, "epochs", "must be at least 1");
  require(warmup_epochs < epochs, "warmup_epochs", "must be smaller than epochs");
  require(sr_mode == "trainable" || sr_mode == "fixed_zero" || sr_mode == "fixed_one" || sr_mode == "snn_only",
          "sr_mode", "must be one of trainable, fixed_zero, fixed_one, snn_only");
  require(M1 >= 1, "M1", "must be positive");
  require(M2 >= 1, "M2", "must be positive");
  require(snn_hidden >= 1, "snn_hidden", "must be positive");
  require(lif_leak > 0.0 && lif_leak <= 1.0, "lif_leak", "must lie in (0, 1]");
  require(lif_threshold > 0.0, "lif_threshold", "must exceed the reset potential 0");
  require(surrogate_width > 0.0, "surrogate_width", "must be positive");
  require(heads >= 1 && d_model % heads == 0, "heads", "must divide d_model");
  require(ff_dim >= 1, "ff_dim", "must be positive");
  require(layers >= 1, "layers", "must be positive");
  // Longest caption is [CLS] + 8 words + [SEP].
  require(max_seq_len >= num_patches() + 10, "max_seq_len",
          "must hold 10 text tokens plus " + std::to_string(num_patches()) + " image tokens");
  require(d_align >= 1, "d_align", "must be positive");
  require(temperature >= 1e-3 && temperature <= 10.0, "temperature", "must lie in [1e-3, 10]");
  require(mask_rate >= 0.0 && mask_rate <= 1.0, "mask_rate", "must lie in [0, 1]");
  for (auto [name, lr] : {std::pair{"lr_transformer", lr_transformer}, std::pair{"lr_fusion", lr_fusion},
                          std::pair{"lr_cnn", lr_cnn}, std::pair{"lr_snn", lr_snn},
                          std::pair{"lr_collector", lr_collector}}) {
    require(lr > 0.0 && std::isfinite(lr), name, "must be a positive finite number");
  }
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(weight_decay >= 0.0, "weight_decay", "must be non-negative");
  for (std::size_t t : sweep.T) require(t >= 1, "sweep.T", "values must be at least 1");
  for (std::size_t phi : sweep.retrieve_count) {
    require(phi >= 1 && phi <= batch_size, "sweep.retrieve_count", "values must lie in [1, batch_size]");
  }
  for (const auto& m : sweep.sr_mode) {
    require(m == "trainable" || m == "fixed_zero" || m == "fixed_one" || m == "snn_only", "sweep.sr_mode",
            "unknown mode '" + m + "'");
  }
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  for_each_field(*this, [&](const char* name, const auto& field) { j[name] = field; });
  nlohmann::ordered_json s = nlohmann::ordered_json::object();
  for_each_axis(sweep, [&](const char* name, const auto& field) {
    if (!field.empty()) s[name] = field;
  });
  j["sweep"] = s;
  return j.dump(2);
}

RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (text.find_first_not_of(" \t\r\n") != std::string_view::npos) apply_object(cfg, parse_json(text, "<config>"));
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must have the form key=value");
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json patch = json::object();
    if (key.rfind("sweep.", 0) == 0) {
      patch["sweep"][key.substr(6)] = value;
    } else {
      patch[key] = value;
    }
    apply_object(cfg, patch);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace ash::harness
