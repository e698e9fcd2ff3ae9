#include "pargraph/dataset_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

namespace pargraph {

using nlohmann::json;
namespace fs = std::filesystem;

static constexpr char kBlobMagic[4] = {'P', 'A', 'R', 'F'};

Tensor2 load_feature_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("feature blob: cannot open " + path);
    char magic[4];
    std::uint32_t rows = 0, dim = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    if (!in || std::memcmp(magic, kBlobMagic, 4) != 0)
        throw DataError("feature blob: bad header in " + path);
    Tensor2 out(static_cast<int>(rows), static_cast<int>(dim));
    std::vector<float> buf(std::size_t(rows) * dim);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (!in) throw DataError("feature blob: truncated data in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = double(buf[i]);
    return out;
}

void save_feature_blob(const std::string& path, const Tensor2& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("feature blob: cannot open " + path + " for writing");
    const std::uint32_t r = std::uint32_t(rows.rows);
    const std::uint32_t d = std::uint32_t(rows.cols);
    out.write(kBlobMagic, 4);
    out.write(reinterpret_cast<const char*>(&r), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    std::vector<float> buf(rows.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(rows.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (!out) throw DataError("feature blob: write failed for " + path);
}

namespace {

struct PendingFeature {
    int frame = 0;
    int subject = 0;
    std::string file;
    int row = 0;
};

FrameAnnotation parse_frame(const json& j, int line_no, std::vector<PendingFeature>& pending,
                            int frame_pos) {
    FrameAnnotation f;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
        f.frame_id = j.at("frame_id").get<long>();
        f.image_width = j.at("image_width").get<int>();
        f.image_height = j.at("image_height").get<int>();
        for (const json& js : j.at("subjects")) {
            SubjectAnnotation s;
            s.id = js.at("id").get<int>();
            const json& bb = js.at("bbox");
            if (!bb.is_array() || bb.size() != 4) throw DataError(where + "bbox must have 4 entries");
            s.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
            for (const json& a : js.at("actions")) s.actions.insert(a.get<int>());
            if (js.contains("feature")) {
                s.feature = js.at("feature").get<std::vector<double>>();
            } else if (js.contains("feature_ref")) {
                const json& ref = js.at("feature_ref");
                pending.push_back({frame_pos, int(f.subjects.size()),
                                   ref.at("file").get<std::string>(), ref.at("row").get<int>()});
            } else {
                throw DataError(where + "subject " + std::to_string(s.id) +
                                " has neither feature nor feature_ref");
            }
            f.subjects.push_back(std::move(s));
        }
        if (j.contains("groups")) {
            for (const json& jg : j.at("groups")) {
                GroupAnnotation g;
                for (const json& m : jg.at("members")) g.members.insert(m.get<int>());
                if (jg.contains("activities"))
                    for (const json& a : jg.at("activities")) g.activities.insert(a.get<int>());
                f.groups.push_back(std::move(g));
            }
        }
        if (j.contains("global"))
            for (const json& a : j.at("global")) f.global_activities.insert(a.get<int>());
    } catch (const json::exception& e) {
        throw DataError(where + "schema violation: " + e.what());
    }
    return f;
}

}  // namespace

std::vector<FrameAnnotation> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);
    const fs::path base = fs::path(path).parent_path();

    std::vector<FrameAnnotation> frames;
    std::vector<PendingFeature> pending;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": bad JSON: " + e.what());
        }
        frames.push_back(parse_frame(j, line_no, pending, int(frames.size())));
    }

    // Resolve referenced features, loading each blob once.
    std::map<std::string, Tensor2> blobs;
    for (const PendingFeature& p : pending) {
        auto it = blobs.find(p.file);
        if (it == blobs.end()) {
            const std::string full = (base / p.file).string();
            it = blobs.emplace(p.file, load_feature_blob(full)).first;
        }
        const Tensor2& blob = it->second;
        if (p.row < 0 || p.row >= blob.rows)
            throw DataError("feature_ref row " + std::to_string(p.row) + " out of range in " + p.file);
        std::vector<double> feat(blob.cols);
        for (int j = 0; j < blob.cols; ++j) feat[j] = blob(p.row, j);
        frames[p.frame].subjects[p.subject].feature = std::move(feat);
    }

    for (std::size_t i = 0; i < frames.size(); ++i) {
        try {
            frames[i].validate();
        } catch (const DataError& e) {
            throw DataError("load_dataset: " + std::string(e.what()));
        }
    }
    return frames;
}

void save_dataset(const std::string& path, const std::vector<FrameAnnotation>& frames,
                  const std::string& blob_file) {
    std::ofstream out(path);
    if (!out) throw DataError("save_dataset: cannot open " + path + " for writing");

    Tensor2 blob;
    int next_row = 0;
    if (!blob_file.empty()) {
        int total = 0;
        int dim = 0;
        for (const FrameAnnotation& f : frames) {
            total += f.n_subjects();
            if (f.n_subjects() > 0) dim = int(f.subjects.front().feature.size());
        }
        blob = Tensor2(total, dim);
    }

    for (const FrameAnnotation& f : frames) {
        json j;
        j["frame_id"] = f.frame_id;
        j["image_width"] = f.image_width;
        j["image_height"] = f.image_height;
        j["subjects"] = json::array();
        for (const SubjectAnnotation& s : f.subjects) {
            json js;
            js["id"] = s.id;
            js["bbox"] = {s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h};
            js["actions"] = s.actions;
            if (blob_file.empty()) {
                js["feature"] = s.feature;
            } else {
                for (std::size_t k = 0; k < s.feature.size(); ++k)
                    blob(next_row, int(k)) = s.feature[k];
                js["feature_ref"] = {{"file", blob_file}, {"row", next_row}};
                ++next_row;
            }
            j["subjects"].push_back(std::move(js));
        }
        j["groups"] = json::array();
        for (const GroupAnnotation& g : f.groups)
            j["groups"].push_back({{"members", g.members}, {"activities", g.activities}});
        j["global"] = f.global_activities;
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("save_dataset: write failed for " + path);
    if (!blob_file.empty()) {
        const fs::path base = fs::path(path).parent_path();
        save_feature_blob((base / blob_file).string(), blob);
    }
}

}  // namespace pargraph
