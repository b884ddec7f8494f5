#pragma once

#include <string>
#include <vector>

#include "zsd/infer.hpp"
#include "zsd/matching.hpp"
#include "zsd/metrics.hpp"

namespace zsd {

// Ground-truth annotation file: images, category names, instances.
struct GtFile {
    std::vector<ImageInfo> images;
    std::vector<std::string> categories;
    std::vector<GroundTruthInstance> annotations;
};

// JSON object with "images" [{id,width,height}], "categories" [names] and
// "annotations" [{image_id, category, bbox [x1,y1,x2,y2], optional mask
// {size, data "0101..."}}]. Categories and image ids are validated.
GtFile load_gt(const std::string& path);
void save_gt(const std::string& path, const GtFile& gt);

// JSON lines, one proposal per line: {"image_id", "box", "z" [p], optional
// "zm" {"n", "t", "values" [(y*n+x)*t + channel]}}.
std::vector<ProposalRecord> load_proposals(const std::string& path);
void save_proposals(const std::string& path, const std::vector<ProposalRecord>& proposals);

// JSON lines, one detection per line: {"image_id", "category", "origin",
// "score", "box", optional "mask" {"size", "probs" [size*size]}}.
std::vector<Detection> load_detections(const std::string& path);
void save_detections(const std::string& path, const std::vector<Detection>& dets);

}  // namespace zsd
