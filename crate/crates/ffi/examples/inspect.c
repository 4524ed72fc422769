/* Loads a checkpoint, lists its labels and renders one view. */
#include <stdio.h>
#include <stdlib.h>

#include "semsplat.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s scene.ckpt\n", argv[0]);
        return 2;
    }
    SemsplatScene *scene = NULL;
    if (semsplat_scene_load(argv[1], &scene) != SEMSPLAT_STATUS_OK) {
        fprintf(stderr, "load failed: %s\n", semsplat_last_error());
        return 1;
    }
    size_t n = 0, labels = 0;
    semsplat_scene_len(scene, &n);
    semsplat_scene_num_labels(scene, &labels);
    printf("gaussians %zu\n", n);
    for (size_t i = 0; i < labels; i++) {
        const char *label = NULL;
        semsplat_scene_label(scene, i, &label);
        printf("label %zu %s\n", i + 1, label);
    }

    SemsplatCamera cam = {32.0, 32.0, 16.0, 16.0, 32, 32, {0}};
    double pose[16] = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 4, 0, 0, 0, 1};
    for (int i = 0; i < 16; i++) cam.world_to_camera[i] = pose[i];
    float *rgb = malloc(sizeof(float) * 32 * 32 * 3);
    SemsplatStatus st = semsplat_render(scene, &cam, rgb, 32 * 32 * 3);
    float sum = 0;
    for (int i = 0; i < 32 * 32 * 3; i++) sum += rgb[i];
    printf("render %d nonblack %d\n", (int)st, sum > 0);

    st = semsplat_render(scene, &cam, rgb, 7);
    printf("short buffer %d: %s\n", (int)st, semsplat_last_error());

    free(rgb);
    semsplat_scene_free(scene);
    return 0;
}
