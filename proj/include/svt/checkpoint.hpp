#pragma once

// Checkpoint container.
//
//   SVTCKPT 1\n
//   <key> <value>\n ...           model config, then "params <count>"
//   for each parameter:  "<name>\n" followed by one tensor dump block
//
// Loading rebuilds the architecture from the config lines and requires every
// stored tensor to match the expected name and shape.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "svt/model.hpp"
#include "svt/tensor_io.hpp"

namespace svt {

inline std::vector<std::pair<std::string, std::size_t>> model_config_fields(const SvtConfig& c) {
  return {{"frames", c.frames}, {"height", c.height}, {"width", c.width},         {"patch", c.patch},
          {"dim", c.dim},       {"heads", c.heads},   {"depth", c.depth},         {"mlp_ratio", c.mlp_ratio},
          {"sem_dim", c.sem_dim}};
}

inline std::size_t* model_config_field(SvtConfig& c, const std::string& key) {
  static const std::map<std::string, std::size_t SvtConfig::*> fields = {
      {"frames", &SvtConfig::frames}, {"height", &SvtConfig::height},   {"width", &SvtConfig::width},
      {"patch", &SvtConfig::patch},   {"dim", &SvtConfig::dim},         {"heads", &SvtConfig::heads},
      {"depth", &SvtConfig::depth},   {"mlp_ratio", &SvtConfig::mlp_ratio}, {"sem_dim", &SvtConfig::sem_dim}};
  auto it = fields.find(key);
  return it == fields.end() ? nullptr : &(c.*(it->second));
}

template <class T>
void save_checkpoint(std::ostream& os, const SvtModel<T>& model) {
  os << "SVTCKPT 1\n";
  for (const auto& [key, value] : model_config_fields(model.config)) os << key << ' ' << value << '\n';
  const auto params = model.parameters();
  os << "params " << params.size() << '\n';
  for (const auto& p : params) {
    os << p.name << '\n';
    write_tensor(os, p.tensor);
  }
  if (!os) throw IoError("checkpoint: write failed");
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const SvtModel<T>& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  save_checkpoint(os, model);
}

template <class T>
SvtModel<T> load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "SVTCKPT 1") throw IoError("checkpoint: bad magic line '" + line + "'");
  SvtConfig cfg;
  std::size_t count = 0;
  for (;;) {
    if (!std::getline(is, line)) throw IoError("checkpoint: truncated header");
    std::istringstream ls(line);
    std::string key;
    std::size_t value = 0;
    if (!(ls >> key >> value)) throw IoError("checkpoint: bad header line '" + line + "'");
    if (key == "params") {
      count = value;
      break;
    }
    auto* field = model_config_field(cfg, key);
    if (!field) throw IoError("checkpoint: unknown config key '" + key + "'");
    *field = value;
  }
  cfg.validate();
  auto model = SvtModel<T>::init(cfg, 0);
  auto params = model.parameters();
  if (count != params.size()) {
    throw ShapeError(detail::concat("checkpoint: holds ", count, " tensors, config expects ", params.size()));
  }
  for (auto& p : params) {
    if (!std::getline(is, line)) throw IoError("checkpoint: truncated before " + p.name);
    if (line != p.name) throw ShapeError("checkpoint: expected tensor '" + p.name + "', found '" + line + "'");
    auto stored = read_tensor<T>(is);
    if (stored.shape() != p.tensor.shape()) {
      throw ShapeError("checkpoint: " + p.name + " has shape " + detail::shape_str(stored.shape()) + ", expected " +
                       detail::shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
  return model;
}

template <class T>
SvtModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path.string());
  return load_checkpoint<T>(is);
}

}  // namespace svt
