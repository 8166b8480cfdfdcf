#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semstereo/raster.hpp"
#include "semstereo/registration.hpp"
#include "semstereo/types.hpp"

namespace semstereo {

struct DisparityScore {
    double epe = 0.0;  // mean |pred - truth| over jointly valid pixels
    double d1 = 0.0;   // (jointly valid with error strictly > thresh
                       //  + pred-invalid at truth-valid) / truth-valid
    double invalid_fraction = 0.0;  // pred-invalid at truth-valid / truth-valid
    long truth_valid = 0;
    long jointly_valid = 0;
    double thresh = 3.0;
};

// Pred-invalid pixels where truth is valid count as erroneous in d1 and in
// invalid_fraction but are excluded from the epe mean. No truth-valid pixels
// is a data error; no jointly valid pixels gives epe = +inf.
DisparityScore disparity_metrics(const Raster<float>& pred,
                                 const Raster<float>& truth,
                                 double thresh = 3.0);

struct ClassScore {
    uint8_t cls = 0;
    long tp = 0, fp = 0, fn = 0;
    long truth_count = 0, pred_count = 0;
    double iou = 0.0;
    bool in_union = false;  // excluded from the mean when truth and pred
                            // both lack the class
};

struct SegmentationScore {
    std::vector<ClassScore> per_class;
    double miou = 0.0;  // mean over classes with nonzero union
    double oa = 0.0;
    long evaluated = 0;  // truth != unlabeled
    long ignored = 0;
};

// Per-class IoU, mIoU, and overall accuracy over the fixed scored class set.
// Truth-unlabeled positions are ignored entirely. All truth unlabeled is a
// data error.
SegmentationScore segmentation_metrics(const std::vector<uint8_t>& pred,
                                       const std::vector<uint8_t>& truth);
SegmentationScore segmentation_metrics(const Raster<uint8_t>& pred,
                                       const Raster<uint8_t>& truth);

enum class GeomMode { Disparity2d, Height3d };
enum class GeomUnit { Pixels, Meters };

struct GeomThreshold {
    double value = 3.0;
    GeomUnit unit = GeomUnit::Pixels;
};

// Combined semantic-geometric IoU: a true positive needs the correct label
// AND geometric error strictly below the threshold. Positions whose truth
// geometry is unmeasurable (NaN in geom_err with a valid truth label) qualify
// on the label alone. 2d mode expects a pixel threshold, 3d a meter
// threshold; a mismatch is an argument error.
SegmentationScore combined_miou(const std::vector<uint8_t>& pred_labels,
                                const std::vector<float>& geom_err,
                                const std::vector<uint8_t>& truth_labels,
                                GeomMode mode, GeomThreshold thresh);

enum class ZAccuracyStat { Rms, Median };

struct ZScore {
    double completeness = 0.0;  // truth cells with recon valid and
                                // |error| strictly < thresh
    double accuracy = 0.0;      // over the complete cells
    ZAccuracyStat stat = ZAccuracyStat::Rms;
    long truth_valid = 0;
    long complete = 0;
    double thresh = 1.0;
};

// Height-surface completeness and accuracy on a common grid, after applying
// `align` to the reconstruction. Empty truth is a data error.
ZScore z_metrics(const HeightField& recon, const HeightField& truth,
                 double thresh = 1.0, const Translation3D& align = {},
                 ZAccuracyStat stat = ZAccuracyStat::Rms);

// Same math as segmentation_metrics, on point label arrays.
SegmentationScore pointcloud_metrics(const std::vector<uint8_t>& pred,
                                     const std::vector<uint8_t>& truth);

struct PairQuality {
    std::string id;
    double epe = 0.0;
};

struct PairPartition {
    std::vector<PairQuality> kept;      // epe <= thresh, input order
    std::vector<PairQuality> rejected;
};

PairPartition pair_filter(const std::vector<PairQuality>& pairs,
                          double thresh = 5.0);

// Flat report of one scoring run, serializable as key-value text, as JSON,
// and as an aligned table over multiple reports.
struct MetricsReport {
    std::string task;  // pairwise | multiview | pointcloud
    std::string id;    // pair or tile id
    std::map<std::string, double> values;
    std::map<std::string, std::string> notes;
};

std::string report_kv(const MetricsReport& r);
std::string report_json(const std::vector<MetricsReport>& rs);
std::string report_table(const std::vector<MetricsReport>& rs);

void fill_report(MetricsReport& r, const DisparityScore& s,
                 const std::string& prefix = "");
void fill_report(MetricsReport& r, const SegmentationScore& s,
                 const std::string& prefix = "");
void fill_report(MetricsReport& r, const ZScore& s,
                 const std::string& prefix = "");

}  // namespace semstereo
