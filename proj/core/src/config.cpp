#include "sscd/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sscd/error.hpp"

namespace sscd {
namespace {

using json = nlohmann::ordered_json;

json perturbation_to_json(const PerturbationSpec& spec) {
  const PerturbationParams defaults;
  if (spec.params == defaults) return std::string(to_string(spec.kind));
  json j;
  j["kind"] = to_string(spec.kind);
  j["noise_bound"] = spec.params.noise_bound;
  j["drop_min"] = spec.params.drop_min;
  j["drop_max"] = spec.params.drop_max;
  j["cutout_min"] = spec.params.cutout_min;
  j["cutout_max"] = spec.params.cutout_max;
  j["vat_xi"] = spec.params.vat_xi;
  j["vat_eps"] = spec.params.vat_eps;
  j["vat_iterations"] = spec.params.vat_iterations;
  j["threshold"] = spec.params.threshold;
  return j;
}

template <typename T>
T field(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("field '" + path + "': " + e.what());
  }
}

PerturbationSpec perturbation_from_json(const json& j, const std::string& path) {
  if (j.is_string()) return {parse_perturbation_kind(j.get<std::string>()), {}};
  if (!j.is_object() || !j.contains("kind")) {
    throw ConfigError("field '" + path + "': expected a kind name or an object with 'kind'");
  }
  PerturbationSpec spec{parse_perturbation_kind(field<std::string>(j["kind"], path + ".kind")),
                        {}};
  auto& p = spec.params;
  for (const auto& [key, value] : j.items()) {
    const auto sub = path + "." + key;
    if (key == "kind") continue;
    if (key == "noise_bound") p.noise_bound = field<double>(value, sub);
    else if (key == "drop_min") p.drop_min = field<double>(value, sub);
    else if (key == "drop_max") p.drop_max = field<double>(value, sub);
    else if (key == "cutout_min") p.cutout_min = field<double>(value, sub);
    else if (key == "cutout_max") p.cutout_max = field<double>(value, sub);
    else if (key == "vat_xi") p.vat_xi = field<double>(value, sub);
    else if (key == "vat_eps") p.vat_eps = field<double>(value, sub);
    else if (key == "vat_iterations") p.vat_iterations = field<int>(value, sub);
    else if (key == "threshold") p.threshold = field<double>(value, sub);
    else throw ConfigError("unknown key '" + sub + "'");
  }
  return spec;
}

json default_document() { return json::parse(TrainConfig{}.to_json()); }

// Merges `patch` into `base`, rejecting keys the defaults do not define.
void merge_strict(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const auto path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key '" + path + "'");
    if (base[key].is_object() && value.is_object()) {
      merge_strict(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

TrainConfig from_document(const json& doc) {
  TrainConfig c;
  c.lr = field<double>(doc.at("lr"), "lr");
  c.momentum = field<double>(doc.at("momentum"), "momentum");
  c.weight_decay = field<double>(doc.at("weight_decay"), "weight_decay");
  c.poly_power = field<double>(doc.at("poly_power"), "poly_power");
  c.epochs = field<int64_t>(doc.at("epochs"), "epochs");
  c.batch_labeled = field<int64_t>(doc.at("batch_labeled"), "batch_labeled");
  c.batch_unlabeled = field<int64_t>(doc.at("batch_unlabeled"), "batch_unlabeled");
  c.ramp_fraction = field<double>(doc.at("ramp_fraction"), "ramp_fraction");
  c.threshold = field<double>(doc.at("threshold"), "threshold");
  c.seed = field<std::uint64_t>(doc.at("seed"), "seed");

  const auto& perturbations = doc.at("perturbations");
  if (!perturbations.is_array()) throw ConfigError("field 'perturbations': expected an array");
  c.perturbations.clear();
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    c.perturbations.push_back(
        perturbation_from_json(perturbations[i], "perturbations[" + std::to_string(i) + "]"));
  }

  const auto& m = doc.at("model");
  try {
    c.backbone = parse_backbone(field<std::string>(m.at("backbone"), "model.backbone"));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("field 'model.backbone': ") + e.what());
  }
  c.encoder_channels = field<int64_t>(m.at("encoder_channels"), "model.encoder_channels");
  c.diff_channels = field<int64_t>(m.at("diff_channels"), "model.diff_channels");
  c.decoder_channels = field<int64_t>(m.at("decoder_channels"), "model.decoder_channels");
  c.pretrained = field<std::string>(m.at("pretrained"), "model.pretrained");

  const auto& a = doc.at("augmentation");
  c.augment = field<bool>(a.at("enabled"), "augmentation.enabled");
  c.augmentation.flip_prob = field<double>(a.at("flip_prob"), "augmentation.flip_prob");
  c.augmentation.rescale_min = field<double>(a.at("rescale_min"), "augmentation.rescale_min");
  c.augmentation.rescale_max = field<double>(a.at("rescale_max"), "augmentation.rescale_max");
  c.augmentation.crop_size = field<int64_t>(a.at("crop_size"), "augmentation.crop_size");
  c.augmentation.blur_prob = field<double>(a.at("blur_prob"), "augmentation.blur_prob");
  c.augmentation.jitter_strength =
      field<double>(a.at("jitter_strength"), "augmentation.jitter_strength");

  const auto& d = doc.at("data");
  c.data.root = field<std::string>(d.at("root"), "data.root");
  c.data.split_dir = field<std::string>(d.at("split_dir"), "data.split_dir");
  c.data.patch_size = field<int64_t>(d.at("patch_size"), "data.patch_size");
  c.output_dir = field<std::string>(doc.at("output_dir"), "output_dir");
  c.validate();
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(lr > 0)) fail("field 'lr': must be > 0");
  if (momentum < 0 || momentum >= 1) fail("field 'momentum': must lie in [0, 1)");
  if (weight_decay < 0) fail("field 'weight_decay': must be >= 0");
  if (epochs < 0) fail("field 'epochs': must be >= 0");
  if (batch_labeled < 1) fail("field 'batch_labeled': must be >= 1");
  if (batch_unlabeled < 1) fail("field 'batch_unlabeled': must be >= 1");
  if (!(ramp_fraction > 0 && ramp_fraction <= 1)) fail("field 'ramp_fraction': must lie in (0, 1]");
  if (!(threshold > 0 && threshold < 1)) fail("field 'threshold': must lie in (0, 1)");
  if (data.patch_size < 0) fail("field 'data.patch_size': must be >= 0");
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    try {
      perturbations[i].params.validate();
    } catch (const ValidationError& e) {
      fail("field 'perturbations[" + std::to_string(i) + "]': " + e.what());
    }
  }
  try {
    augmentation.validate();
    model_config().validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = backbone == Backbone::Tiny ? ModelConfig::tiny() : ModelConfig{};
  if (encoder_channels > 0) m.encoder_channels = encoder_channels;
  if (diff_channels > 0) m.diff_channels = diff_channels;
  if (decoder_channels > 0) m.decoder_channels = decoder_channels;
  m.auxiliaries.clear();
  for (const auto& p : perturbations) m.auxiliaries.push_back(p.kind);
  return m;
}

std::string TrainConfig::to_json() const {
  json j;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["poly_power"] = poly_power;
  j["epochs"] = epochs;
  j["batch_labeled"] = batch_labeled;
  j["batch_unlabeled"] = batch_unlabeled;
  j["ramp_fraction"] = ramp_fraction;
  j["threshold"] = threshold;
  j["seed"] = seed;
  j["perturbations"] = json::array();
  for (const auto& p : perturbations) j["perturbations"].push_back(perturbation_to_json(p));
  j["model"] = {{"backbone", to_string(backbone)},
                {"encoder_channels", encoder_channels},
                {"diff_channels", diff_channels},
                {"decoder_channels", decoder_channels},
                {"pretrained", pretrained}};
  j["augmentation"] = {{"enabled", augment},
                       {"flip_prob", augmentation.flip_prob},
                       {"rescale_min", augmentation.rescale_min},
                       {"rescale_max", augmentation.rescale_max},
                       {"crop_size", augmentation.crop_size},
                       {"blur_prob", augmentation.blur_prob},
                       {"jitter_strength", augmentation.jitter_strength}};
  j["data"] = {{"root", data.root}, {"split_dir", data.split_dir},
               {"patch_size", data.patch_size}};
  j["output_dir"] = output_dir;
  return j.dump(2);
}

TrainConfig parse_config(const std::string& json_text) {
  json doc = default_document();
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  merge_strict(doc, patch, "");
  return from_document(doc);
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const json defaults = default_document();
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' is not of the form key=value");
    }
    const auto key = item.substr(0, eq);
    const auto text = item.substr(eq + 1);

    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }

    const json* schema = &defaults;
    json* target = &doc;
    std::stringstream parts(key);
    std::vector<std::string> path;
    for (std::string part; std::getline(parts, part, '.');) path.push_back(part);
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (!schema->is_object() || !schema->contains(path[i])) {
        throw ConfigError("unknown key '" + key + "'");
      }
      schema = &(*schema)[path[i]];
      if (i + 1 == path.size()) {
        (*target)[path[i]] = value;
      } else {
        if (!target->contains(path[i]) || !(*target)[path[i]].is_object()) {
          (*target)[path[i]] = json::object();
        }
        target = &(*target)[path[i]];
      }
    }
  }
  return doc.dump(2);
}

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  std::string text = "{}";
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(apply_overrides(text, overrides));
}

}  // namespace sscd
