//! Metric definitions transcribed literally: confusion table built cell by
//! cell, ratios from raw counts, silhouette from a full distance matrix.

pub fn table(y_true: &[u32], y_pred: &[u32], positive: u32) -> [[f64; 2]; 2] {
    // table[actual positive?][predicted positive?]
    let mut t = [[0.0; 2]; 2];
    for i in 0..y_true.len() {
        let a = (y_true[i] == positive) as usize;
        let p = (y_pred[i] == positive) as usize;
        t[a][p] += 1.0;
    }
    t
}

pub fn accuracy(t: &[[f64; 2]; 2]) -> f64 {
    let (tp, tn, fp, fn_) = (t[1][1], t[0][0], t[0][1], t[1][0]);
    (tp + tn) / (tp + tn + fp + fn_)
}

pub fn precision(t: &[[f64; 2]; 2]) -> Option<f64> {
    let predicted_pos = t[0][1] + t[1][1];
    (predicted_pos > 0.0).then(|| t[1][1] / predicted_pos)
}

pub fn recall(t: &[[f64; 2]; 2]) -> Option<f64> {
    let actual_pos = t[1][0] + t[1][1];
    (actual_pos > 0.0).then(|| t[1][1] / actual_pos)
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        1.0 / ((1.0 / p + 1.0 / r) / 2.0)
    }
}

pub fn mae(y: &[f64], yh: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(yh)
        .fold(0.0, |acc, (a, b)| acc + (a - b).abs() / n)
}

pub fn silhouette(points: &[Vec<f64>], labels: &[u32]) -> f64 {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..points[i].len() {
                s += (points[i][k] - points[j][k]).powi(2);
            }
            d[i][j] = s.sqrt();
        }
    }
    let mut distinct: Vec<u32> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    let mut scores = Vec::new();
    for i in 0..n {
        let same: Vec<usize> = (0..n)
            .filter(|&j| j != i && labels[j] == labels[i])
            .collect();
        if same.is_empty() {
            scores.push(0.0);
            continue;
        }
        let a = same.iter().map(|&j| d[i][j]).sum::<f64>() / same.len() as f64;
        let mut b = f64::MAX;
        for &c in &distinct {
            if c == labels[i] {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let mean = members.iter().map(|&j| d[i][j]).sum::<f64>() / members.len() as f64;
            if mean < b {
                b = mean;
            }
        }
        let denom = if a > b { a } else { b };
        scores.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    scores.iter().sum::<f64>() / n as f64
}
