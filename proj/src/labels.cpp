#include "emr/labels.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "emr/corpus.hpp"
#include "emr/error.hpp"

namespace emr {

using json = nlohmann::json;

std::vector<Label> parse_labels(std::string_view json_text, const Corpus* corpus) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error("MalformedLabels", std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object() || !root.contains("labels") || !root["labels"].is_array())
        throw Error("MalformedLabels", "expected an object with a 'labels' array");

    std::vector<Label> out;
    const json& arr = root["labels"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& e = arr[i];
        const std::string where = "/labels/" + std::to_string(i);
        if (!e.is_object() || !e.contains("doc_id") || !e["doc_id"].is_string() || !e.contains("variable") ||
            !e["variable"].is_string() || !e.contains("value") || !e["value"].is_boolean())
            throw Error("MalformedLabels", where + ": expected {doc_id: string, variable: string, value: bool}");
        Label l{e["doc_id"].get<std::string>(), e["variable"].get<std::string>(), e["value"].get<bool>()};
        if (corpus) {
            if (!corpus->find(l.doc_id)) throw Error("MalformedLabels", where + ": unknown doc_id '" + l.doc_id + "'");
            if (!corpus->has_variable(l.variable))
                throw Error("MalformedLabels", where + ": unknown variable '" + l.variable + "'");
        }
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<Label> load_labels(const std::filesystem::path& path, const Corpus* corpus) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("MalformedLabels", "cannot read label file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_labels(buf.str(), corpus);
}

std::string labels_to_json(const std::vector<Label>& labels) {
    json arr = json::array();
    for (const auto& l : labels) arr.push_back({{"doc_id", l.doc_id}, {"variable", l.variable}, {"value", l.value}});
    return json{{"labels", std::move(arr)}}.dump(1);
}

void save_labels(const std::filesystem::path& path, const std::vector<Label>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << labels_to_json(labels) << '\n';
}

}  // namespace emr
