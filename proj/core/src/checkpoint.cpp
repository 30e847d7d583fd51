#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "fpflow/density_model.hpp"

namespace fpflow {

namespace {

using nlohmann::json;

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

std::string family_name(LatentFamily f) {
  return f == LatentFamily::Gaussian ? "gaussian" : "student_t";
}
LatentFamily family_from(const std::string& s) {
  if (s == "gaussian") return LatentFamily::Gaussian;
  if (s == "student_t") return LatentFamily::StudentT;
  throw std::runtime_error("checkpoint: unknown latent family '" + s + "'");
}
std::string cov_name(CovarianceParam c) {
  return c == CovarianceParam::CholeskyLower ? "cholesky_lower" : "identity_plus_aat";
}
CovarianceParam cov_from(const std::string& s) {
  if (s == "cholesky_lower") return CovarianceParam::CholeskyLower;
  if (s == "identity_plus_aat") return CovarianceParam::IdentityPlusAAT;
  throw std::runtime_error("checkpoint: unknown covariance parameterization '" + s + "'");
}

}  // namespace

struct CheckpointCodec {
  static json header(const DensityModel& model, double t) {
    json h;
    h["format"] = "fpflow-checkpoint";
    h["version"] = 1;
    h["t"] = t;
    h["param_count"] = model.params().size();
    h["latent"] = {{"family", family_name(model.latent_spec().family)},
                   {"dim", model.latent_spec().dim},
                   {"covariance", cov_name(model.latent_spec().covariance)}};
    json blocks = json::array();
    for (const CouplingBlockSpec& b : model.blocks()) {
      blocks.push_back({{"half_a", b.half_a},
                        {"half_b", b.half_b},
                        {"hidden_widths", b.hidden_widths},
                        {"include_t", b.include_t}});
    }
    h["blocks"] = blocks;
    json layout = json::array();
    for (const auto& [name, range] : model.params().layout().groups()) {
      layout.push_back({{"name", name}, {"offset", range.offset}, {"size", range.size}});
    }
    h["layout"] = layout;
    return h;
  }

  static DensityModel from_header(const json& h, double& t) {
    if (h.at("format").get<std::string>() != "fpflow-checkpoint") {
      throw std::runtime_error("checkpoint: bad format tag");
    }
    if (h.at("version").get<int>() != 1) {
      throw std::runtime_error("checkpoint: unsupported version");
    }
    t = h.at("t").get<double>();
    LatentSpec latent;
    latent.family = family_from(h.at("latent").at("family").get<std::string>());
    latent.dim = h.at("latent").at("dim").get<int>();
    latent.covariance = cov_from(h.at("latent").at("covariance").get<std::string>());
    std::vector<CouplingBlockSpec> blocks;
    for (const json& jb : h.at("blocks")) {
      CouplingBlockSpec b;
      b.half_a = jb.at("half_a").get<std::vector<int>>();
      b.half_b = jb.at("half_b").get<std::vector<int>>();
      b.hidden_widths = jb.at("hidden_widths").get<std::vector<int>>();
      b.include_t = jb.at("include_t").get<bool>();
      blocks.push_back(std::move(b));
    }
    DensityModel model(latent, std::move(blocks));
    if (model.params().size() != h.at("param_count").get<Eigen::Index>()) {
      throw std::runtime_error("checkpoint: parameter count does not match the specs");
    }
    return model;
  }
};

void DensityModel::save_checkpoint(const std::filesystem::path& path, double t) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path.string());
  out << CheckpointCodec::header(*this, t).dump() << '\n';
  const Eigen::VectorXd& v = params_.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &v(i), sizeof(bits));
    bits = to_little_endian(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::pair<DensityModel, double> DensityModel::load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw std::runtime_error("checkpoint is truncated (no header): " + path.string());
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_line);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint header is corrupt: " + std::string(e.what()));
  }
  double t = 0.0;
  DensityModel model = CheckpointCodec::from_header(h, t);
  Eigen::VectorXd& v = model.params_.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof(bits))) {
      throw std::runtime_error("checkpoint is truncated (parameter block): " + path.string());
    }
    bits = to_little_endian(bits);
    std::memcpy(&v(i), &bits, sizeof(bits));
  }
  if (!v.allFinite()) {
    throw std::runtime_error("checkpoint contains non-finite parameters: " + path.string());
  }
  return {std::move(model), t};
}

}  // namespace fpflow
