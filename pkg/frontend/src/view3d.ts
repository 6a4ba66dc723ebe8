// three.js mirror of the SceneModel: retained keyed meshes (no per-frame
// scene rebuild), geometry shared across all entities of a kind, and
// picking by bounding-volume ray tests only — no physics, nothing moves
// on its own, so static meshes plus color/scale updates are enough.

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

import { cpuColor, gpuColor, TIER_COLORS } from "./colors";
import type { Selection, SceneModel } from "./scene";

const NODE_GEOMETRY = new THREE.BoxGeometry(1, 1, 1);
const GPU_GEOMETRY = new THREE.BoxGeometry(0.18, 0.18, 0.18);
const AVATAR_GEOMETRY = new THREE.CapsuleGeometry(0.32, 0.7, 4, 12);

const HIGHLIGHT_EMISSIVE = new THREE.Color(0x3a3a3a);
const SELECTED_EMISSIVE = new THREE.Color(0x777777);
const BLACK = new THREE.Color(0x000000);

interface NodeMeshes {
  group: THREE.Group;
  body: THREE.Mesh<THREE.BoxGeometry, THREE.MeshLambertMaterial>;
  gpus: THREE.Mesh<THREE.BoxGeometry, THREE.MeshBasicMaterial>[];
}

export class TwinView {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private raycaster = new THREE.Raycaster();
  private nodeMeshes = new Map<string, NodeMeshes>();
  private avatarMeshes = new Map<string, THREE.Mesh<THREE.CapsuleGeometry, THREE.MeshLambertMaterial>>();
  private syncedGeneration = -1;

  constructor(
    private canvas: HTMLCanvasElement,
    private model: SceneModel,
  ) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.camera = new THREE.PerspectiveCamera(55, 1, 0.1, 200);
    this.camera.position.set(8, 6, 14);
    this.controls = new OrbitControls(this.camera, canvas);
    this.controls.target.set(6, 2, 0);
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const sun = new THREE.DirectionalLight(0xffffff, 1.6);
    sun.position.set(5, 12, 8);
    this.scene.add(sun);
    const floor = new THREE.Mesh(
      new THREE.PlaneGeometry(80, 40),
      new THREE.MeshLambertMaterial({ color: 0x1b2129 }),
    );
    floor.rotation.x = -Math.PI / 2;
    floor.position.y = -0.8;
    this.scene.add(floor);
  }

  start(): void {
    const frame = () => {
      this.resize();
      this.sync();
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
      requestAnimationFrame(frame);
    };
    requestAnimationFrame(frame);
  }

  private resize(): void {
    const w = this.canvas.clientWidth;
    const h = this.canvas.clientHeight;
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.renderer.setSize(w, h, false);
      this.camera.aspect = w / Math.max(h, 1);
      this.camera.updateProjectionMatrix();
    }
  }

  /** Reconcile meshes against the model; cheap no-op when nothing changed. */
  sync(force = false): void {
    if (!force && this.model.generation === this.syncedGeneration) {
      this.applyHighlights();
      return;
    }
    this.syncedGeneration = this.model.generation;

    for (const [id, entity] of this.model.nodes) {
      let meshes = this.nodeMeshes.get(id);
      if (!meshes) {
        meshes = this.createNode(entity.wire.gpus.length);
        this.nodeMeshes.set(id, meshes);
        this.scene.add(meshes.group);
      }
      meshes.group.position.set(entity.position.x, entity.position.y, entity.position.z);
      meshes.body.material.color.setHex(cpuColor(entity.wire.cpu));
      if (meshes.gpus.length !== entity.wire.gpus.length) {
        for (const g of meshes.gpus) meshes.group.remove(g);
        meshes.gpus = this.buildGpuCubes(meshes.group, entity.wire.gpus.length);
      }
      entity.wire.gpus.forEach((intensity, i) => {
        meshes!.gpus[i].material.color.setHex(gpuColor(intensity));
      });
      meshes.group.userData = { kind: "node", id };
    }
    for (const [id, meshes] of this.nodeMeshes) {
      if (!this.model.nodes.has(id)) {
        this.scene.remove(meshes.group);
        this.disposeNode(meshes);
        this.nodeMeshes.delete(id);
      }
    }

    for (const [id, entity] of this.model.users) {
      let mesh = this.avatarMeshes.get(id);
      if (!mesh) {
        mesh = new THREE.Mesh(
          AVATAR_GEOMETRY,
          new THREE.MeshLambertMaterial({ color: TIER_COLORS.normal }),
        );
        this.avatarMeshes.set(id, mesh);
        this.scene.add(mesh);
      }
      // scale and tier color come straight off the wire document
      mesh.scale.setScalar(entity.wire.scale);
      mesh.position.set(
        entity.position.x,
        entity.position.y + 0.6 * entity.wire.scale,
        entity.position.z,
      );
      mesh.material.color.setHex(TIER_COLORS[entity.wire.tier]);
      mesh.userData = { kind: "user", id };
    }
    for (const [id, mesh] of this.avatarMeshes) {
      if (!this.model.users.has(id)) {
        this.scene.remove(mesh);
        mesh.material.dispose();
        this.avatarMeshes.delete(id);
      }
    }

    this.applyHighlights();
  }

  private createNode(gpuCount: number): NodeMeshes {
    const group = new THREE.Group();
    const body = new THREE.Mesh(
      NODE_GEOMETRY,
      new THREE.MeshLambertMaterial({ color: 0x446688 }),
    );
    group.add(body);
    return { group, body, gpus: this.buildGpuCubes(group, gpuCount) };
  }

  private buildGpuCubes(group: THREE.Group, count: number) {
    const gpus = [];
    for (let i = 0; i < count; i++) {
      const cube = new THREE.Mesh(
        GPU_GEOMETRY,
        new THREE.MeshBasicMaterial({ color: BLACK }),
      );
      cube.position.set(-0.35 + i * 0.25, -0.28, 0.6);
      group.add(cube);
      gpus.push(cube);
    }
    return gpus;
  }

  private disposeNode(meshes: NodeMeshes): void {
    meshes.body.material.dispose();
    for (const g of meshes.gpus) g.material.dispose();
  }

  private applyHighlights(): void {
    const sel = this.model.selection;
    for (const [id, meshes] of this.nodeMeshes) {
      const selected = sel?.kind === "node" && sel.id === id;
      const lit = this.model.highlightedNodes.has(id);
      meshes.body.material.emissive.copy(
        selected ? SELECTED_EMISSIVE : lit ? HIGHLIGHT_EMISSIVE : BLACK,
      );
    }
    for (const [id, mesh] of this.avatarMeshes) {
      const selected = sel?.kind === "user" && sel.id === id;
      const lit = this.model.highlightedUsers.has(id);
      mesh.material.emissive.copy(
        selected ? SELECTED_EMISSIVE : lit ? HIGHLIGHT_EMISSIVE : BLACK,
      );
    }
  }

  /** Bounding-volume picking: ray vs axis-aligned boxes, nearest wins. */
  pick(clientX: number, clientY: number): Selection {
    const rect = this.canvas.getBoundingClientRect();
    const pointer = new THREE.Vector2(
      ((clientX - rect.left) / rect.width) * 2 - 1,
      -((clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(pointer, this.camera);
    const ray = this.raycaster.ray;

    let best: { selection: Selection; dist: number } | null = null;
    const box = new THREE.Box3();
    const hit = new THREE.Vector3();
    const consider = (obj: THREE.Object3D, selection: Selection) => {
      box.setFromObject(obj);
      if (ray.intersectBox(box, hit)) {
        const dist = hit.distanceTo(ray.origin);
        if (!best || dist < best.dist) best = { selection, dist };
      }
    };
    for (const [id, meshes] of this.nodeMeshes) consider(meshes.body, { kind: "node", id });
    for (const [id, mesh] of this.avatarMeshes) consider(mesh, { kind: "user", id });
    return best ? (best as { selection: Selection }).selection : null;
  }
}
