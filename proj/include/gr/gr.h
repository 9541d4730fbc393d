/* C interface of the garmentrefine library. All objects are opaque handles owned by the caller
   and released with the matching *_free function. Every call returning gr_status leaves a
   thread-local message readable through gr_last_error() when it fails. */
#ifndef GR_GR_H
#define GR_GR_H

#include <stddef.h>
#include <stdint.h>

#if defined(GR_BUILDING_LIBRARY)
#define GR_API __attribute__((visibility("default")))
#else
#define GR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gr_status {
  GR_OK = 0,
  GR_ERR_VALIDATION = 1,
  GR_ERR_NUMERICAL = 2,
  GR_ERR_IO = 3,
  GR_ERR_INVALID_ARGUMENT = 4,
  GR_ERR_INTERNAL = 5
} gr_status;

typedef struct gr_mesh gr_mesh;
typedef struct gr_cameras gr_cameras;
typedef struct gr_bundle gr_bundle;
typedef struct gr_gaussians gr_gaussians;

GR_API const char* gr_version(void);
GR_API const char* gr_last_error(void);
GR_API const char* gr_status_name(gr_status status);
/* 0 restores the hardware default. */
GR_API void gr_set_threads(int threads);
/* Releases strings returned through char** out-parameters. */
GR_API void gr_string_free(char* s);

/* Meshes. Vertices are xyz triples, faces counter-clockwise index triples. */
GR_API gr_status gr_mesh_load_obj(const char* path, gr_mesh** out);
GR_API gr_status gr_mesh_save_obj(const gr_mesh* mesh, const char* path);
GR_API gr_status gr_mesh_create(const double* vertices, size_t vertex_count, const int32_t* faces, size_t face_count,
                                gr_mesh** out);
GR_API void gr_mesh_free(gr_mesh* mesh);
GR_API size_t gr_mesh_vertex_count(const gr_mesh* mesh);
GR_API size_t gr_mesh_face_count(const gr_mesh* mesh);
GR_API gr_status gr_mesh_get_vertices(const gr_mesh* mesh, double* out);
GR_API gr_status gr_mesh_get_faces(const gr_mesh* mesh, int32_t* out);
GR_API gr_status gr_mesh_boundary_loop_count(const gr_mesh* mesh, size_t* out);
GR_API gr_status gr_chamfer_distance(const gr_mesh* a, const gr_mesh* b, size_t samples, uint64_t seed, double* out);

/* Camera sets (cameras.json). */
GR_API gr_status gr_cameras_load(const char* path, gr_cameras** out);
GR_API gr_status gr_cameras_save(const gr_cameras* cameras, const char* path);
/* Ring around the mesh bounding box: radius 1.5 x diagonal, elevations -10 and 15 degrees, 45 degree fov. */
GR_API gr_status gr_cameras_ring(const gr_mesh* mesh, int count, int resolution, gr_cameras** out);
GR_API void gr_cameras_free(gr_cameras* cameras);
GR_API size_t gr_cameras_count(const gr_cameras* cameras);

/* Guidance bundles. */
GR_API gr_status gr_bundle_load(const char* dir, gr_bundle** out);
GR_API gr_status gr_bundle_save(const gr_bundle* bundle, const char* dir);
GR_API void gr_bundle_free(gr_bundle* bundle);
GR_API size_t gr_bundle_view_count(const gr_bundle* bundle);
/* Synthetic guidance rendered from a known mesh. texture_png may be NULL (uniform gray);
   otherwise the mesh must carry uvs. */
GR_API gr_status gr_synth_guidance(const gr_mesh* target, const gr_cameras* cameras, const char* texture_png, gr_bundle** out);

/* Gaussian splats. options_json may be NULL. The bundle carries RGB and masks only. */
GR_API gr_status gr_gaussians_load_ply(const char* path, gr_gaussians** out);
GR_API void gr_gaussians_free(gr_gaussians* cloud);
GR_API size_t gr_gaussians_count(const gr_gaussians* cloud);
GR_API gr_status gr_render_gaussians(const gr_gaussians* cloud, const gr_cameras* cameras, double threshold,
                                     const char* options_json, gr_bundle** out);

/* Pipeline stages. config_json may be NULL for defaults. report_json (optional) receives a JSON
   document that includes the effective configuration. */
GR_API gr_status gr_smooth(const gr_mesh* mesh, const char* config_json, gr_mesh** out, char** report_json);

/* When artifact_dir is non-NULL it receives progress.csv, coarse.obj and hole_masks/. */
GR_API gr_status gr_deform(const gr_mesh* template_mesh, const gr_bundle* bundle, const char* config_json,
                           const char* artifact_dir, gr_mesh** out, char** report_json);

/* Writes <out_prefix>.obj, .mtl and .png. */
GR_API gr_status gr_texture(const gr_mesh* mesh, const gr_bundle* bundle, const char* config_json, const char* out_prefix,
                            char** report_json);

/* The garment is first scaled by `scale` and translated by `translation` (may be NULL). */
GR_API gr_status gr_drape(const gr_mesh* garment, const gr_mesh* body, double scale, const double* translation,
                          const char* config_json, gr_mesh** out, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
