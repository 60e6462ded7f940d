#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "w2flow/mlp.hpp"

namespace w2flow {
namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }
  return v;
}

}  // namespace

void save_checkpoint(const Mlp& net, const std::string& path, std::uint64_t seed) {
  const Vector params = net.parameters();
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path);
    for (Eigen::Index k = 0; k < params.size(); ++k) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(params[k]));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
    if (!out) throw Error("write failed: " + path);
  }
  const nlohmann::json sidecar = {
      {"layer_sizes", net.layer_sizes()}, {"activation", to_string(net.activation())}, {"seed", seed}};
  std::ofstream meta(path + ".json");
  if (!meta) throw Error("cannot write checkpoint sidecar: " + path + ".json");
  meta << sidecar.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream meta(path + ".json");
  if (!meta) throw Error("cannot open checkpoint sidecar: " + path + ".json");
  nlohmann::json sidecar;
  try {
    meta >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed checkpoint sidecar: " + std::string(e.what()));
  }
  std::vector<int> sizes;
  std::string activation;
  std::uint64_t seed = 0;
  try {
    sizes = sidecar.at("layer_sizes").get<std::vector<int>>();
    activation = sidecar.at("activation").get<std::string>();
    seed = sidecar.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint sidecar is missing fields: " + std::string(e.what()));
  }
  Mlp net(sizes, activation_from_string(activation));

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  Vector params(net.parameter_count());
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw Error("checkpoint is shorter than its declared layout: " + path);
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes, 8);
    params[k] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint is longer than its declared layout: " + path);
  net.set_parameters(params);
  return {std::move(net), seed};
}

}  // namespace w2flow
