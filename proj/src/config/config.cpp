#include "peerstyle/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace peerstyle {

namespace {

// Reads known keys from a map node and rejects the rest.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) throw ConfigError(path_ + ": expected a mapping");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_[key]) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path_ + key + ": cannot parse '" + YAML::Dump(node_[key]) + "'");
    }
  }

  /// Present and non-null child, or an undefined node.
  YAML::Node child(const char* key) {
    seen_.insert(key);
    if (node_ && node_[key] && !node_[key].IsNull()) return node_[key];
    return YAML::Node(YAML::NodeType::Undefined);
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(path_ + key + ": unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_net(const YAML::Node& node, NetConfig& n) {
  Section s(node, "net.");
  s.read("image_channels", n.image_channels);
  s.read("base_width", n.base_width);
  s.read("content_channels", n.content_channels);
  s.read("style_local_channels", n.style_local_channels);
  s.read("style_global_channels", n.style_global_channels);
  s.read("n_resnet_blocks", n.n_resnet_blocks);
  s.read("gst_blocks", n.gst_blocks);
  s.read("k_neighbors", n.k_neighbors);
  s.read("attention_dropout", n.attention_dropout);
  s.read("discriminator_noise_sigma", n.discriminator_noise_sigma);
  s.read("init_std", n.init_std);
  s.read("norm_eps", n.norm_eps);
  s.finish();
}

SyntheticClass read_class(const YAML::Node& node, const std::string& path) {
  SyntheticClass c;
  Section s(node, path);
  std::string family = family_name(c.family);
  std::vector<std::vector<double>> palette;
  s.read("name", c.name);
  s.read("family", family);
  s.read("frequency", c.frequency);
  s.read("angle", c.angle);
  s.read("palette", palette);
  s.finish();
  try {
    c.family = parse_family(family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + "family: " + e.what());
  }
  if (!palette.empty()) {
    if (palette.size() != 2 || palette[0].size() != 3 || palette[1].size() != 3) {
      throw ConfigError(path + "palette: expected two RGB triples");
    }
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) c.palette[i][j] = palette[i][j];
  }
  return c;
}

void read_data(const YAML::Node& node, DatasetSpec& d) {
  Section s(node, "data.");
  std::string mode = d.mode == DatasetSpec::Mode::synthetic ? "synthetic" : "folders";
  std::size_t n_styles = 0;
  s.read("mode", mode);
  s.read("crop_size", d.crop_size);
  s.read("synthetic_styles", n_styles);
  s.read("style_dirs", d.style_dirs);
  s.read("content_dir", d.content_dir);
  const YAML::Node styles = s.child("styles");
  const YAML::Node content = s.child("content");
  s.finish();
  if (mode == "synthetic") {
    d.mode = DatasetSpec::Mode::synthetic;
  } else if (mode == "folders") {
    d.mode = DatasetSpec::Mode::folders;
  } else {
    throw ConfigError("data.mode: expected 'synthetic' or 'folders', got '" + mode + "'");
  }
  if (n_styles > 0) {
    const DatasetSpec preset = DatasetSpec::synthetic_default(n_styles, d.crop_size);
    d.styles = preset.styles;
  }
  if (styles) {
    if (!styles.IsSequence()) throw ConfigError("data.styles: expected a list");
    d.styles.clear();
    for (std::size_t i = 0; i < styles.size(); ++i) {
      d.styles.push_back(read_class(styles[i], "data.styles[" + std::to_string(i) + "]."));
    }
  }
  if (content) d.content = read_class(content, "data.content.");
}

void emit_class(YAML::Emitter& out, const SyntheticClass& c) {
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "family" << YAML::Value << family_name(c.family);
  out << YAML::Key << "frequency" << YAML::Value << c.frequency;
  out << YAML::Key << "angle" << YAML::Value << c.angle;
  out << YAML::Key << "palette" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& color : c.palette) out << YAML::Flow << std::vector<double>(color.begin(), color.end());
  out << YAML::EndSeq;
  out << YAML::EndMap;
}

}  // namespace

TrainConfig parse_train_config(const std::string& yaml) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
  TrainConfig c;
  if (root.IsNull()) return c;
  Section s(root, "");
  s.read("learning_rate", c.learning_rate);
  s.read("batch_size", c.batch_size);
  s.read("epochs", c.epochs);
  s.read("decay_start_epoch", c.decay_start_epoch);
  s.read("lambda_idt", c.lambda_idt);
  s.read("margin_mu", c.margin_mu);
  s.read("photos_per_epoch", c.photos_per_epoch);
  s.read("seed", c.seed);
  s.read("adam_beta1", c.adam_beta1);
  s.read("adam_beta2", c.adam_beta2);
  s.read("adam_epsilon", c.adam_epsilon);
  s.read("max_steps", c.max_steps);
  s.read("log_every", c.log_every);
  s.read("checkpoint_every", c.checkpoint_every);
  s.read("eval_samples_per_class", c.eval_samples_per_class);
  std::string preset;
  s.read("net_preset", preset);
  if (preset == "full") {
    c.net = NetConfig::full();
  } else if (!preset.empty() && preset != "desk") {
    throw ConfigError("net_preset: expected 'desk' or 'full', got '" + preset + "'");
  }
  read_net(s.child("net"), c.net);
  read_data(s.child("data"), c.data);
  s.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_train_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_yaml(const TrainConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "learning_rate" << YAML::Value << c.learning_rate;
  out << YAML::Key << "batch_size" << YAML::Value << c.batch_size;
  out << YAML::Key << "epochs" << YAML::Value << c.epochs;
  out << YAML::Key << "decay_start_epoch" << YAML::Value << c.decay_start_epoch;
  out << YAML::Key << "lambda_idt" << YAML::Value << c.lambda_idt;
  out << YAML::Key << "margin_mu" << YAML::Value << c.margin_mu;
  out << YAML::Key << "photos_per_epoch" << YAML::Value << c.photos_per_epoch;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "adam_beta1" << YAML::Value << c.adam_beta1;
  out << YAML::Key << "adam_beta2" << YAML::Value << c.adam_beta2;
  out << YAML::Key << "adam_epsilon" << YAML::Value << c.adam_epsilon;
  out << YAML::Key << "max_steps" << YAML::Value << c.max_steps;
  out << YAML::Key << "log_every" << YAML::Value << c.log_every;
  out << YAML::Key << "checkpoint_every" << YAML::Value << c.checkpoint_every;
  out << YAML::Key << "eval_samples_per_class" << YAML::Value << c.eval_samples_per_class;

  const NetConfig& n = c.net;
  out << YAML::Key << "net" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "image_channels" << YAML::Value << n.image_channels;
  out << YAML::Key << "base_width" << YAML::Value << n.base_width;
  out << YAML::Key << "content_channels" << YAML::Value << n.content_channels;
  out << YAML::Key << "style_local_channels" << YAML::Value << n.style_local_channels;
  out << YAML::Key << "style_global_channels" << YAML::Value << n.style_global_channels;
  out << YAML::Key << "n_resnet_blocks" << YAML::Value << n.n_resnet_blocks;
  out << YAML::Key << "gst_blocks" << YAML::Value << n.gst_blocks;
  out << YAML::Key << "k_neighbors" << YAML::Value << n.k_neighbors;
  out << YAML::Key << "attention_dropout" << YAML::Value << n.attention_dropout;
  out << YAML::Key << "discriminator_noise_sigma" << YAML::Value << n.discriminator_noise_sigma;
  out << YAML::Key << "init_std" << YAML::Value << n.init_std;
  out << YAML::Key << "norm_eps" << YAML::Value << n.norm_eps;
  out << YAML::EndMap;

  const DatasetSpec& d = c.data;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << (d.mode == DatasetSpec::Mode::synthetic ? "synthetic" : "folders");
  out << YAML::Key << "crop_size" << YAML::Value << d.crop_size;
  out << YAML::Key << "content_dir" << YAML::Value << d.content_dir;
  out << YAML::Key << "style_dirs" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : d.style_dirs) out << s;
  out << YAML::EndSeq;
  out << YAML::Key << "content" << YAML::Value;
  emit_class(out, d.content);
  out << YAML::Key << "styles" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : d.styles) emit_class(out, s);
  out << YAML::EndSeq;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace peerstyle
