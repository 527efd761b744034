#include "refine/checkpoint.hpp"

#include <cstring>

#include "refine/binary_io.hpp"
#include "refine/errors.hpp"

namespace refine {
namespace {

void put_tensor(ByteWriter& out, const std::string& name, const MatrixXf& m) {
  out.put_string(name);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  out.put_array<float>(std::span<const float>(m.data(), static_cast<std::size_t>(m.size())));
}

bool same_bits(const MatrixXf& a, const MatrixXf& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelBundle& bundle) {
  const auto& c = bundle.config;
  ByteWriter out;
  out.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("RFNE"), 4));
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(c.field));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.latent_dim));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.max_lod));
  out.put<std::uint8_t>(static_cast<std::uint8_t>(c.fusion));
  out.put<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
  out.put<float>(c.omega0);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.subdivision_hidden));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.head_hidden.size()));
  for (int h : c.head_hidden) out.put<std::uint32_t>(static_cast<std::uint32_t>(h));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(bundle.latents.size()));
  for (const auto& id : bundle.latents.ids()) out.put_string(id);

  const auto params = bundle.nets.named_parameters();
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.size() + 1));
  for (const auto& [name, t] : params) put_tensor(out, name, t.value());
  put_tensor(out, "latents", bundle.latents.as_matrix());
  return std::move(out).bytes();
}

ModelBundle decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.get_bytes(4);
  if (std::memcmp(magic.data(), "RFNE", 4) != 0) throw IoError("checkpoint: bad magic (not an RFNE file)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig c;
  const auto field = in.get<std::uint8_t>();
  if (field > 2) throw IoError("checkpoint: unknown field kind");
  c.field = static_cast<FieldKind>(field);
  c.latent_dim = static_cast<int>(in.get<std::uint32_t>());
  c.max_lod = static_cast<int>(in.get<std::uint32_t>());
  const auto fusion = in.get<std::uint8_t>();
  const auto act = in.get<std::uint8_t>();
  if (fusion > 1 || act > 1) throw IoError("checkpoint: unknown fusion or activation");
  c.fusion = static_cast<FusionKind>(fusion);
  c.activation = static_cast<Activation>(act);
  c.omega0 = in.get<float>();
  c.subdivision_hidden = static_cast<int>(in.get<std::uint32_t>());
  const auto heads = in.get<std::uint32_t>();
  if (heads > 64) throw IoError("checkpoint: implausible head depth");
  c.head_hidden.clear();
  for (std::uint32_t i = 0; i < heads; ++i) c.head_hidden.push_back(static_cast<int>(in.get<std::uint32_t>()));
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw IoError(std::string("checkpoint: invalid configuration: ") + e.what());
  }
  const auto k = in.get<std::uint32_t>();
  std::vector<std::string> ids;
  for (std::uint32_t i = 0; i < k; ++i) ids.push_back(in.get_string());

  // Shapes come from the configuration; the stored tensors must match them.
  ModelBundle bundle;
  bundle.config = c;
  bundle.nets = RefineNetworks::create(c, 0);
  auto params = bundle.nets.named_parameters();
  const auto count = in.get<std::uint32_t>();
  if (count != params.size() + 1) throw IoError("checkpoint: tensor count does not match the configuration");
  auto read_into = [&](const std::string& expected, MatrixXf& m) {
    const auto name = in.get_string();
    if (name != expected) throw IoError("checkpoint: expected tensor '" + expected + "', found '" + name + "'");
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    if (rows != static_cast<std::uint32_t>(m.rows()) || cols != static_cast<std::uint32_t>(m.cols())) {
      throw IoError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
    in.get_array<float>(std::span<float>(m.data(), static_cast<std::size_t>(m.size())));
  };
  for (auto& [name, t] : params) read_into(name, t.mutable_value());
  MatrixXf latents(static_cast<Eigen::Index>(k), c.latent_dim);
  read_into("latents", latents);
  if (!in.at_end()) throw IoError("checkpoint: trailing bytes");
  try {
    bundle.latents = LatentTable::from_matrix(std::move(ids), latents);
  } catch (const DomainError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return bundle;
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  write_file_bytes(path, encode_checkpoint(bundle));
}

ModelBundle load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

bool bundles_identical(const ModelBundle& a, const ModelBundle& b) {
  if (!(a.config == b.config) || a.latents.ids() != b.latents.ids()) return false;
  const auto pa = a.nets.named_parameters();
  const auto pb = b.nets.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || !same_bits(pa[i].second.value(), pb[i].second.value())) return false;
  }
  return same_bits(a.latents.as_matrix(), b.latents.as_matrix());
}

}  // namespace refine
