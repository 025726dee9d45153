import init, { lattice, occupancy, decode } from "./pkg/gtct_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function showError(target, err) {
  target.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err);
  target.appendChild(p);
}

function echo(ids) {
  for (const id of ids) $(id + "-v").textContent = $(id).value;
}

function renderLattice() {
  const out = $("lat-out");
  try {
    out.textContent = lattice($("lat-topology").value, $("lat-labels").value, num("lat-vocab"), $("lat-format").value);
    out.classList.remove("error");
  } catch (err) {
    out.textContent = String(err);
    out.classList.add("error");
  }
}

function heatCell(p) {
  const td = document.createElement("td");
  const shade = Math.round(255 * (1 - p));
  td.style.background = `rgb(${shade}, ${shade}, 255)`;
  td.title = p.toFixed(4);
  if (p >= 0.05) td.textContent = p.toFixed(2);
  return td;
}

function renderOccupancy() {
  echo(["occ-frames", "occ-sharp"]);
  const out = $("occ-out");
  let res;
  try {
    res = JSON.parse(occupancy($("lat-topology").value, $("lat-labels").value, num("lat-vocab"),
      num("occ-frames"), num("occ-seed"), num("occ-sharp")));
  } catch (err) {
    $("occ-loss").textContent = "";
    showError(out, err);
    return;
  }
  $("occ-loss").textContent = `loss = ${res.loss.toFixed(4)}`;
  const inner = res.nodes.slice(1, -1);
  const table = document.createElement("table");
  table.className = "heat";
  const head = table.insertRow();
  head.appendChild(document.createElement("th")).textContent = "t";
  for (const name of inner) head.appendChild(document.createElement("th")).textContent = name;
  res.occupancy.forEach((row, t) => {
    const tr = table.insertRow();
    tr.appendChild(document.createElement("th")).textContent = t + 1;
    for (const p of row.slice(1, -1)) tr.appendChild(heatCell(p));
  });
  out.innerHTML = "";
  out.appendChild(table);
}

const fmt = (labels) => `(${labels.join(", ")})`;

function renderDecode() {
  echo(["dec-frames", "dec-vocab", "dec-beam", "dec-theta1", "dec-theta2", "dec-sharp"]);
  const out = $("dec-out");
  const theta2 = num("dec-theta2") >= 20 ? Infinity : num("dec-theta2");
  if (theta2 === Infinity) $("dec-theta2-v").textContent = "∞";
  let res;
  try {
    res = JSON.parse(decode(num("dec-seed"), num("dec-frames"), num("dec-vocab"), num("dec-beam"),
      num("dec-theta1"), theta2, num("dec-sharp")));
  } catch (err) {
    showError(out, err);
    return;
  }
  out.innerHTML = "";
  const summary = document.createElement("p");
  summary.className = "labels";
  summary.innerHTML =
    `frame argmax: ${fmt(res.greedy_frames.map((k) => (k === 0 ? "∅" : k)))}<br>` +
    `greedy: ${fmt(res.greedy)} &nbsp; log score ${res.greedy_score.toFixed(4)}<br>` +
    `beam: ${fmt(res.beam)} &nbsp; log score ${res.beam_score.toFixed(4)}`;
  out.appendChild(summary);

  const table = document.createElement("table");
  table.className = "heat";
  const head = table.insertRow();
  head.appendChild(document.createElement("th")).textContent = "t";
  res.state0[0].forEach((_, k) => {
    head.appendChild(document.createElement("th")).textContent = k === 0 ? "∅" : k;
  });
  res.state0.forEach((row, t) => {
    const tr = table.insertRow();
    tr.appendChild(document.createElement("th")).textContent = t + 1;
    for (const p of row) tr.appendChild(heatCell(p));
  });
  const caption = document.createElement("p");
  caption.textContent = "Posteriors of the empty-prefix decoder state:";
  out.appendChild(caption);
  out.appendChild(table);

  const list = document.createElement("pre");
  list.textContent = "final beam (prefix, score)\n" +
    res.hypotheses.map((h) => `${fmt(h.prefix).padEnd(24)} ${h.score.toFixed(4)}`).join("\n");
  out.appendChild(list);
}

await init();
$("status").textContent = "Ready.";
for (const id of ["lat-topology", "lat-labels", "lat-vocab", "lat-format"]) {
  $(id).addEventListener("input", () => {
    renderLattice();
    renderOccupancy();
  });
}
for (const id of ["occ-frames", "occ-seed", "occ-sharp"]) $(id).addEventListener("input", renderOccupancy);
for (const id of ["dec-frames", "dec-vocab", "dec-beam", "dec-theta1", "dec-theta2", "dec-sharp", "dec-seed"]) {
  $(id).addEventListener("input", renderDecode);
}
renderLattice();
renderOccupancy();
renderDecode();
