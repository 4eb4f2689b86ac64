#include "promptlab/weights_io.hpp"

#include "promptlab/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace plab {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m)
{
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Vector& v)
{
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

class Reader {
public:
    const json& field(const json& obj, const std::string& name, const std::string& at) const
    {
        if (!obj.is_object()) throw ParseError(at.empty() ? "/" : at, "expected an object");
        auto it = obj.find(name);
        if (it == obj.end()) throw ParseError(at + "/" + name, "missing field '" + name + "'");
        return *it;
    }

    Index count(const json& obj, const std::string& name) const
    {
        const json& v = field(obj, name, "");
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw ParseError("/" + name, "expected a nonnegative integer");
        return static_cast<Index>(v.get<long long>());
    }

    double number(const json& v, const std::string& at) const
    {
        if (!v.is_number()) throw ParseError(at, "expected a number");
        return v.get<double>();
    }

    Matrix matrix(const json& obj, const std::string& name, const std::string& at, Index rows, Index cols) const
    {
        const std::string here = at + "/" + name;
        const json& v = field(obj, name, at);
        if (!v.is_array()) throw ParseError(here, "expected an array of rows");
        if (static_cast<Index>(v.size()) != rows)
            throw ShapeError(here + ": has " + std::to_string(v.size()) + " rows, expected " + std::to_string(rows));
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            const json& row = v[static_cast<std::size_t>(i)];
            const std::string row_at = here + "/" + std::to_string(i);
            if (!row.is_array()) throw ParseError(row_at, "expected an array");
            if (static_cast<Index>(row.size()) != cols)
                throw ShapeError(row_at + ": has " + std::to_string(row.size()) + " entries, expected " +
                                 std::to_string(cols));
            for (Index j = 0; j < cols; ++j)
                m(i, j) = number(row[static_cast<std::size_t>(j)], row_at + "/" + std::to_string(j));
        }
        return m;
    }

    Vector vector(const json& obj, const std::string& name, const std::string& at, Index size) const
    {
        const std::string here = at + "/" + name;
        const json& v = field(obj, name, at);
        if (!v.is_array()) throw ParseError(here, "expected an array");
        if (static_cast<Index>(v.size()) != size)
            throw ShapeError(here + ": has " + std::to_string(v.size()) + " entries, expected " + std::to_string(size));
        Vector out(size);
        for (Index i = 0; i < size; ++i) out(i) = number(v[static_cast<std::size_t>(i)], here + "/" + std::to_string(i));
        return out;
    }
};

} // namespace

std::string weights_to_json(const TransformerWeights& w)
{
    json doc;
    doc["d"] = w.dims.d;
    doc["h"] = w.dims.h;
    doc["s"] = w.dims.s;
    doc["s_prime"] = w.dims.s_prime;
    doc["d_ff"] = w.dims.d_ff;
    doc["l"] = w.depth();
    doc["masked_default"] = w.masked_default;
    json layers = json::array();
    for (const auto& layer : w.layers) {
        json heads = json::array();
        for (const auto& head : layer.heads)
            heads.push_back({{"W_q", matrix_to_json(head.wq)},
                             {"W_k", matrix_to_json(head.wk)},
                             {"W_v", matrix_to_json(head.wv)},
                             {"W_o", matrix_to_json(head.wo)}});
        layers.push_back({{"heads", std::move(heads)},
                          {"W_1", matrix_to_json(layer.w1)},
                          {"W_2", matrix_to_json(layer.w2)},
                          {"b_1", vector_to_json(layer.b1)},
                          {"b_2", vector_to_json(layer.b2)}});
    }
    doc["layers"] = std::move(layers);
    return doc.dump(1) + "\n";
}

TransformerWeights weights_from_json(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("byte " + std::to_string(e.byte), e.what());
    }

    Reader rd;
    TransformerWeights w;
    w.dims.d = rd.count(doc, "d");
    w.dims.h = rd.count(doc, "h");
    w.dims.s = rd.count(doc, "s");
    w.dims.s_prime = rd.count(doc, "s_prime");
    w.dims.d_ff = rd.count(doc, "d_ff");
    const Index depth = rd.count(doc, "l");
    const json& masked = rd.field(doc, "masked_default", "");
    if (!masked.is_boolean()) throw ParseError("/masked_default", "expected a boolean");
    w.masked_default = masked.get<bool>();

    const json& layers = rd.field(doc, "layers", "");
    if (!layers.is_array()) throw ParseError("/layers", "expected an array");
    if (static_cast<Index>(layers.size()) != depth)
        throw ShapeError("/layers: has " + std::to_string(layers.size()) + " entries, but l = " + std::to_string(depth));

    const auto& dims = w.dims;
    for (Index l = 0; l < depth; ++l) {
        const std::string at = "/layers/" + std::to_string(l);
        const json& lj = layers[static_cast<std::size_t>(l)];
        const json& heads = rd.field(lj, "heads", at);
        if (!heads.is_array()) throw ParseError(at + "/heads", "expected an array");
        if (static_cast<Index>(heads.size()) != dims.h)
            throw ShapeError(at + "/heads: has " + std::to_string(heads.size()) + " entries, but h = " +
                             std::to_string(dims.h));
        LayerWeights layer;
        for (Index k = 0; k < dims.h; ++k) {
            const std::string hat = at + "/heads/" + std::to_string(k);
            const json& hj = heads[static_cast<std::size_t>(k)];
            layer.heads.push_back({rd.matrix(hj, "W_q", hat, dims.s, dims.d), rd.matrix(hj, "W_k", hat, dims.s, dims.d),
                                   rd.matrix(hj, "W_v", hat, dims.s_prime, dims.d),
                                   rd.matrix(hj, "W_o", hat, dims.d, dims.s_prime)});
        }
        layer.w1 = rd.matrix(lj, "W_1", at, dims.d_ff, dims.d);
        layer.w2 = rd.matrix(lj, "W_2", at, dims.d, dims.d_ff);
        layer.b1 = rd.vector(lj, "b_1", at, dims.d_ff);
        layer.b2 = rd.vector(lj, "b_2", at, dims.d);
        w.layers.push_back(std::move(layer));
    }
    w.validate();
    return w;
}

void save_weights(const TransformerWeights& w, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << weights_to_json(w);
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

TransformerWeights load_weights(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return weights_from_json(buf.str());
}

} // namespace plab
