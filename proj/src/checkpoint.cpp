#include "mkgcn/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "mkgcn/error.hpp"

namespace mkgcn {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "mkgcn-checkpoint";
constexpr int kVersion = 1;

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) throw Error("checkpoint tensor has wrong element count");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
  return m;
}

const char* to_string(Aggregator a) { return a == Aggregator::concat ? "concat" : "maxpool"; }
const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "none"; }

}  // namespace

void save_checkpoint(std::ostream& out, const Network& net) {
  const Architecture arch = net.architecture();
  json modules = json::array();
  for (const auto& m : arch.modules)
    modules.push_back({{"orders", m.orders},
                       {"width", m.width},
                       {"aggregator", to_string(m.aggregator)},
                       {"activation", to_string(m.activation)}});
  json params = json::object();
  for (const auto& p : net.parameters()) params[p.name] = matrix_to_json(*p.value);

  json doc = {{"format", kFormat},
              {"version", kVersion},
              {"architecture",
               {{"input_dim", arch.input_dim},
                {"num_classes", arch.num_classes},
                {"head", arch.head == Head::dense ? "dense" : "direct"},
                {"modules", modules}}},
              {"parameters", params}};
  out << doc.dump(1) << '\n';
}

Network load_checkpoint(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat || doc.at("version").get<int>() != kVersion)
      throw Error("unsupported checkpoint format");
    const auto& a = doc.at("architecture");
    Architecture arch;
    arch.input_dim = a.at("input_dim").get<Index>();
    arch.num_classes = a.at("num_classes").get<int>();
    arch.head = a.at("head").get<std::string>() == "dense" ? Head::dense : Head::direct;
    for (const auto& m : a.at("modules")) {
      ModuleSpec spec;
      spec.orders = m.at("orders").get<std::vector<int>>();
      spec.width = m.at("width").get<Index>();
      spec.aggregator = m.at("aggregator").get<std::string>() == "maxpool" ? Aggregator::maxpool : Aggregator::concat;
      spec.activation = m.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::none;
      arch.modules.push_back(std::move(spec));
    }
    Network net = Network::initialize(arch, 0);
    const auto& stored = doc.at("parameters");
    for (const auto& p : net.parameters()) {
      if (!stored.contains(p.name)) throw Error("checkpoint is missing parameter '" + p.name + "'");
      Matrix value = matrix_from_json(stored.at(p.name));
      if (value.rows() != p.value->rows() || value.cols() != p.value->cols())
        throw ShapeMismatch("checkpoint parameter '" + p.name + "' has the wrong shape");
      *p.value = std::move(value);
    }
    if (stored.size() != net.parameters().size()) throw Error("checkpoint has unexpected extra parameters");
    return net;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  save_checkpoint(out, net);
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace mkgcn
