use super::*;
use crate::geometry::RigidTransform;
use crate::mesh::TriangleMesh;
use crate::scene::SceneMesh;
use rand::Rng;

fn instance(id: u32, min: [f64; 3], max: [f64; 3]) -> SceneInstance {
    SceneInstance {
        instance_id: id,
        object_id: format!("o{id}"),
        asset_id: format!("a{id}"),
        class_name: "box".into(),
        world_transform: RigidTransform::identity(),
        world_aabb: Aabb3 { min, max },
    }
}

fn room_with_boxes(room: &RoomSpec, boxes: &[([f64; 3], [f64; 3])]) -> (SceneMesh, Vec<SceneInstance>) {
    let mut mesh = room.shell();
    let mut labels = vec![0u32; mesh.triangles.len()];
    let mut instances = Vec::new();
    for (k, (min, max)) in boxes.iter().enumerate() {
        let id = k as u32 + 1;
        let cube = TriangleMesh::cuboid(Vec3::from(*min), Vec3::from(*max));
        mesh.append(&cube, [0.5, 0.5, 0.5]);
        labels.extend(std::iter::repeat(id).take(cube.triangles.len()));
        instances.push(instance(id, *min, *max));
    }
    (SceneMesh { mesh, triangle_instance: labels }, instances)
}

#[test]
fn empty_unit_room_has_hundred_cells() {
    let cells = candidate_scan_cells(&[], &RoomSpec::new(1.0, 1.0, 3.0), 0.1).unwrap();
    assert_eq!(cells.len(), 100);
    assert!(cells.iter().all(|c| c.z == 1.5));
}

#[test]
fn small_centered_object_removes_one_cell() {
    let inst = instance(1, [0.1, 0.1, 0.0], [0.2, 0.2, 0.5]);
    let cells = candidate_scan_cells(&[inst], &RoomSpec::new(0.3, 0.3, 3.0), 0.1).unwrap();
    assert_eq!(cells.len(), 8);
}

#[test]
fn covered_room_has_no_cells() {
    let inst = instance(1, [0.0, 0.0, 0.0], [2.0, 2.0, 1.0]);
    assert!(matches!(candidate_scan_cells(&[inst], &RoomSpec::new(2.0, 2.0, 3.0), 0.1), Err(ScanError::NoFreeCells)));
}

#[test]
fn fps_collinear_picks_ends_and_middle() {
    let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
    assert_eq!(farthest_point_sampling_from(&pts, 3, 0), vec![0, 9, 4]);
    assert_eq!(farthest_point_sampling(&pts[..1], 1, 3).unwrap(), vec![0]);
    assert!(farthest_point_sampling(&[], 1, 3).is_err());
    assert_eq!(farthest_point_sampling(&pts[..3], 5, 3).unwrap(), vec![0, 1, 2]);
}

#[test]
fn wall_depth_is_exact() {
    let room = RoomSpec::new(4.0, 4.0, 3.0);
    let (scene, _) = room_with_boxes(&room, &[]);
    let rs = RenderScene::new(&scene);
    let k = CameraIntrinsics::default();
    let pose = CameraPose::new(Vec3::new(2.0, 2.0, 1.5), 0.0, 0.0);
    let img = render_depth(&rs, &pose, &k, 20.0);
    let center = 120 * k.width + 160;
    assert!((img.depth[center] - 2.0).abs() < 1e-6);
    assert_eq!(img.instance[center], 0);
}

#[test]
fn sky_is_empty_without_ceiling() {
    let room = RoomSpec::new(4.0, 4.0, 3.0);
    let (scene, _) = room_with_boxes(&room, &[]);
    let rs = RenderScene::new(&scene);
    let k = CameraIntrinsics::with_fov(32, 24, 60.0);
    let img = render_depth(&rs, &CameraPose::new(Vec3::new(2.0, 2.0, 1.5), 0.0, 90.0), &k, 20.0);
    assert!(img.depth.iter().all(|&d| d == 0.0));
    let with_ceiling = RenderScene::new(&room_with_boxes(&RoomSpec { ceiling: true, ..room }, &[]).0);
    let img = render_depth(&with_ceiling, &CameraPose::new(Vec3::new(2.0, 2.0, 1.5), 0.0, 90.0), &k, 20.0);
    assert!(img.depth.iter().all(|&d| d > 0.0));
}

#[test]
fn principal_point_back_projects_forward() {
    let k = CameraIntrinsics { cx: 2.0, cy: 1.0, width: 5, height: 3, ..Default::default() };
    let mut depth = vec![0.0; 15];
    depth[5 + 2] = 2.0;
    let view = ScanView {
        vantage: 0,
        pose: CameraPose::new(Vec3::zeros(), 0.0, 0.0),
        image: DepthImage { width: 5, height: 3, depth, instance: vec![3; 15], color: None },
    };
    let cloud = backproject_and_fuse(&[view.clone()], &k);
    assert_eq!(cloud.len(), 1);
    assert!((cloud.point(0) - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-9);
    assert_eq!(cloud.instance_ids, vec![3]);
    let empty = ScanView { image: DepthImage { depth: vec![0.0; 15], ..view.image }, ..view };
    assert!(backproject_and_fuse(&[empty], &k).is_empty());
}

#[test]
fn voxel_downsample_basics() {
    let cloud = LabeledPointCloud {
        points: vec![[0.01, 0.01, 0.01], [0.015, 0.0, 0.019], [0.0, 0.0, 0.0]],
        instance_ids: vec![1, 2, 3],
        colors: None,
    };
    let out = voxel_downsample(&cloud, 0.02, 5).unwrap();
    assert_eq!(out.len(), 1);
    assert!(cloud.points.contains(&out.points[0]));
    assert!(voxel_downsample(&LabeledPointCloud::default(), 0.02, 5).unwrap().is_empty());
    assert!(voxel_downsample(&cloud, 0.0, 5).is_err());
}

#[test]
fn voxel_count_matches_distinct_keys() {
    let mut rng = rng_from_seed(3);
    let points: Vec<[f64; 3]> = (0..1000).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.5)]).collect();
    let cloud = LabeledPointCloud { instance_ids: vec![1; points.len()], points, colors: None };
    let out = voxel_downsample(&cloud, 0.1, 9).unwrap();
    let keys: std::collections::BTreeSet<(i64, i64, i64)> = cloud
        .points
        .iter()
        .map(|p| ((p[0] * 10.0).floor() as i64, (p[1] * 10.0).floor() as i64, (p[2] * 10.0).floor() as i64))
        .collect();
    assert_eq!(out.len(), keys.len());
}

#[test]
fn nearest_surface_tie_goes_to_lower_id() {
    let room = RoomSpec::new(4.0, 4.0, 3.0);
    let (scene, _) = room_with_boxes(&room, &[([1.0, 1.0, 0.0], [1.5, 1.5, 0.5]), ([2.0, 1.0, 0.0], [2.5, 1.5, 0.5])]);
    let rs = RenderScene::new(&scene);
    // Equidistant from both boxes, far from the walls and floor.
    let p = Vec3::new(1.75, 1.25, 0.4);
    assert_eq!(nearest_instance(&rs, &p), Some(1));
    let cloud = LabeledPointCloud { points: vec![[1.75, 1.25, 0.4], [2.6, 1.2, 0.4]], instance_ids: vec![7, 7], colors: None };
    assert_eq!(assign_labels(&cloud, &rs, LabelMode::HitId), cloud);
    assert_eq!(assign_labels(&cloud, &rs, LabelMode::NearestSurface).instance_ids, vec![1, 2]);
}

#[test]
fn scan_gives_sixty_views_deterministically() {
    let room = RoomSpec::new(3.0, 3.0, 2.5);
    let (scene, instances) = room_with_boxes(&room, &[([1.0, 1.0, 0.0], [1.6, 1.4, 0.8])]);
    let rs = RenderScene::new(&scene);
    let config = ScannerConfig { intrinsics: CameraIntrinsics::with_fov(16, 12, 60.0), ..Default::default() };
    let views = scan_scene(&rs, &instances, &room, &config, 4).unwrap();
    assert_eq!(views.len(), VANTAGE_COUNT * YAW_STEPS);
    let again = scan_scene(&rs, &instances, &room, &config, 4).unwrap();
    assert_eq!(views, again);
    let mut positions: Vec<[f64; 3]> = views.iter().map(|v| v.pose.position).collect();
    positions.dedup();
    assert_eq!(positions.len(), VANTAGE_COUNT);
}

#[test]
fn too_few_cells_is_an_error() {
    let room = RoomSpec::new(0.2, 0.2, 2.0);
    let (scene, instances) = room_with_boxes(&room, &[]);
    let rs = RenderScene::new(&scene);
    let config = ScannerConfig::default();
    assert!(matches!(
        scan_scene(&rs, &instances, &room, &config, 0),
        Err(ScanError::TooFewFreeCells { found: 4, needed: 5 })
    ));
}

#[test]
fn quantized_cloud_is_f32_exact() {
    let mut cloud = LabeledPointCloud { points: vec![[0.1, 1.0 / 3.0, 2.7]], instance_ids: vec![1], colors: None };
    cloud.quantize_f32();
    for c in cloud.points[0] {
        assert_eq!(c, c as f32 as f64);
    }
}
