#include "kinrisk/fit_io.hpp"

#include <fstream>

#include "json.hpp"

#include "kinrisk/errors.hpp"

namespace kinrisk {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "kinrisk-fit-1";

json basis_to_json(const SplineBasis& b) {
  if (b.is_constant()) return json{{"constant", true}};
  return json{{"constant", false},
              {"degree", b.degree()},
              {"interior_knots", b.interior_knots()},
              {"boundary", {b.t_min(), b.t_max()}}};
}

SplineBasis basis_from_json(const json& j) {
  if (j.at("constant").get<bool>()) return SplineBasis::constant();
  const auto boundary = j.at("boundary").get<std::vector<double>>();
  if (boundary.size() != 2) throw ValidationError("basis boundary must have two entries");
  return SplineBasis(j.at("degree").get<int>(), j.at("interior_knots").get<std::vector<double>>(), boundary[0],
                     boundary[1]);
}

}  // namespace

void write_fit(std::ostream& out, const FitResult& fit) {
  json doc;
  doc["format"] = kFormat;
  const auto names = fit.param_names();
  const auto values = fit.coefficients();
  json coefs = json::array();
  for (std::size_t k = 0; k < names.size(); ++k) coefs.push_back({{"name", names[k]}, {"value", values[k]}});
  doc["coefficients"] = coefs;
  doc["basis"] = basis_to_json(fit.spec.basis);
  if (fit.spec.second_gene) doc["second_basis"] = basis_to_json(*fit.spec.second_gene);
  doc["interaction"] = fit.spec.interaction;
  doc["w_names"] = fit.w_names;
  doc["z_names"] = fit.z_names;
  json baseline = json::array();
  for (std::size_t k = 0; k < fit.params.baseline.times.size(); ++k) {
    baseline.push_back({fit.params.baseline.times[k], fit.params.baseline.jumps[k]});
  }
  doc["baseline"] = baseline;
  doc["loglik"] = fit.loglik;
  doc["loglik_trace"] = fit.loglik_trace;
  doc["iters"] = fit.iters;
  doc["converged"] = fit.converged;
  std::vector<double> q;
  q.reserve(fit.posteriors.size() * fit.posteriors.n_configs());
  for (std::size_t i = 0; i < fit.posteriors.size(); ++i) {
    const auto row = fit.posteriors.row(i);
    q.insert(q.end(), row.begin(), row.end());
  }
  doc["posteriors"] = {{"n_configs", fit.posteriors.n_configs()}, {"values", q}};
  out << doc.dump(1) << '\n';
}

void write_fit(const std::filesystem::path& path, const FitResult& fit) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write fit file " + path.string());
  write_fit(out, fit);
  if (!out) throw IoError("failed writing fit file " + path.string());
}

FitResult read_fit(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("fit file is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ValidationError("unrecognised fit file format");
    FitResult fit;
    fit.spec.basis = basis_from_json(doc.at("basis"));
    if (doc.contains("second_basis")) fit.spec.second_gene = basis_from_json(doc.at("second_basis"));
    fit.spec.interaction = doc.at("interaction").get<bool>();
    fit.w_names = doc.at("w_names").get<std::vector<std::string>>();
    fit.z_names = doc.at("z_names").get<std::vector<std::string>>();
    fit.spec.w_dim = fit.w_names.size();
    fit.spec.z_dim = fit.z_names.size();

    const auto names = fit.param_names();
    const auto& coefs = doc.at("coefficients");
    if (coefs.size() != names.size()) throw ValidationError("fit file has the wrong number of coefficients");
    std::vector<double> values;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (coefs[k].at("name").get<std::string>() != names[k]) {
        throw ValidationError("fit file coefficient " + std::to_string(k) + " should be '" + names[k] + "'");
      }
      values.push_back(coefs[k].at("value").get<double>());
    }
    fit.params.unpack(values, fit.spec);
    for (const auto& pair : doc.at("baseline")) {
      fit.params.baseline.times.push_back(pair.at(0).get<double>());
      fit.params.baseline.jumps.push_back(pair.at(1).get<double>());
    }
    fit.loglik = doc.at("loglik").get<double>();
    fit.loglik_trace = doc.at("loglik_trace").get<std::vector<double>>();
    fit.iters = doc.at("iters").get<int>();
    fit.converged = doc.at("converged").get<bool>();
    const auto& post = doc.at("posteriors");
    const auto configs = post.at("n_configs").get<std::size_t>();
    const auto q = post.at("values").get<std::vector<double>>();
    if (configs == 0 || q.size() % configs != 0) throw ValidationError("malformed posterior block");
    fit.posteriors = Posteriors(q.size() / configs, configs);
    for (std::size_t i = 0; i < q.size() / configs; ++i) {
      for (std::size_t c = 0; c < configs; ++c) fit.posteriors(i, c) = q[i * configs + c];
    }
    return fit;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed fit file: ") + e.what());
  }
}

FitResult read_fit(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fit file " + path.string());
  return read_fit(in);
}

}  // namespace kinrisk
