#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace emr {

class Corpus;

struct Label {
    std::string doc_id;
    std::string variable;
    bool value = false;

    friend bool operator==(const Label&, const Label&) = default;
};

// Seed-label file: { "labels": [ { "doc_id", "variable", "value" } ] }.
// When `corpus` is given every doc_id and variable must exist in it.
std::vector<Label> parse_labels(std::string_view json_text, const Corpus* corpus = nullptr);
std::vector<Label> load_labels(const std::filesystem::path& path, const Corpus* corpus = nullptr);
std::string labels_to_json(const std::vector<Label>& labels);
void save_labels(const std::filesystem::path& path, const std::vector<Label>& labels);

}  // namespace emr
