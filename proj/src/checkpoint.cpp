#include "vtbench/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vtb {

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; add byte swapping for this host");
static_assert(sizeof(float) == 4);

void save_arrays(const std::string& path, const NamedArrays& arrays) {
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + path);
  std::ofstream man(path + ".manifest", std::ios::trunc);
  if (!man) throw std::runtime_error("cannot write " + path + ".manifest");
  int64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    if (name.empty() || name.find_first_of(" \t\n=") != std::string::npos)
      throw std::invalid_argument("bad array name: '" + name + "'");
    bin.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(t.size() * 4));
    man << "name=" << name << " offset=" << offset << " shape=";
    const auto& s = t.shape();
    for (size_t i = 0; i < s.size(); ++i) man << (i ? "x" : "") << s[i];
    man << "\n";
    offset += t.size();
  }
  if (!bin || !man) throw std::runtime_error("short write to " + path);
}

NamedArrays load_arrays(const std::string& path) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read " + path);
  std::ifstream man(path + ".manifest");
  if (!man) throw std::runtime_error("cannot read " + path + ".manifest");

  NamedArrays out;
  std::string line;
  int lineno = 0;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string nkv, okv, skv;
    if (!(ls >> nkv >> okv >> skv) || nkv.rfind("name=", 0) != 0 ||
        okv.rfind("offset=", 0) != 0 || skv.rfind("shape=", 0) != 0)
      throw std::runtime_error(path + ".manifest:" + std::to_string(lineno) +
                               ": malformed entry");
    const std::string name = nkv.substr(5);
    const int64_t offset = std::stoll(okv.substr(7));
    std::vector<int> shape;
    std::stringstream ss(skv.substr(6));
    std::string d;
    while (std::getline(ss, d, 'x')) shape.push_back(std::stoi(d));
    dc::Tensor<float> t(shape);
    bin.seekg(offset * 4);
    bin.read(reinterpret_cast<char*>(t.ptr()),
             static_cast<std::streamsize>(t.size() * 4));
    if (!bin)
      throw std::runtime_error(path + ": truncated array '" + name + "'");
    out.emplace_back(name, std::move(t));
  }
  return out;
}

const dc::Tensor<float>& find_array(const NamedArrays& arrays,
                                    const std::string& name) {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw std::runtime_error("array '" + name + "' not found in checkpoint");
}

}  // namespace vtb
