/**
 * Pin-drop screen model: a location from a map click or typed GPS fields,
 * plus the street photo. Validation happens before any request is sent and
 * the form keeps its state when the server rejects an upload.
 */

import { ApiClient, ApiError } from "./api.js";

export function validateLatLon(lat: number, lon: number): string | null {
  if (!Number.isFinite(lat) || !Number.isFinite(lon)) {
    return "latitude and longitude must be numbers";
  }
  if (lat < -90 || lat > 90) return "latitude must be between -90 and 90";
  if (lon < -180 || lon > 180) return "longitude must be between -180 and 180";
  return null;
}

/** Equirectangular map widget: relative (0..1, 0..1) click to lat/lon. */
export function mapClickToLatLon(relX: number, relY: number): { lat: number; lon: number } {
  const clampedX = Math.min(Math.max(relX, 0), 1);
  const clampedY = Math.min(Math.max(relY, 0), 1);
  return { lat: 90 - clampedY * 180, lon: clampedX * 360 - 180 };
}

export class PinDropForm {
  lat: number | null = null;
  lon: number | null = null;
  note = "";
  photo: Blob | null = null;
  error: string | null = null;

  setLocation(lat: number, lon: number): void {
    this.lat = lat;
    this.lon = lon;
    this.error = validateLatLon(lat, lon);
  }

  dropPinAt(relX: number, relY: number): void {
    const { lat, lon } = mapClickToLatLon(relX, relY);
    this.setLocation(lat, lon);
  }

  attachPhoto(photo: Blob): void {
    this.photo = photo;
  }

  /** Null when the form may be submitted. */
  validate(): string | null {
    if (this.lat === null || this.lon === null) return "drop a pin or enter coordinates";
    const geoError = validateLatLon(this.lat, this.lon);
    if (geoError) return geoError;
    if (!this.photo) return "attach a street photo";
    return null;
  }

  /**
   * Create the entry. Invalid forms never reach the network; server errors
   * surface as a user message while every field keeps its value.
   */
  async submit(api: ApiClient): Promise<{ entry_id: string } | null> {
    const validation = this.validate();
    if (validation) {
      this.error = validation;
      return null;
    }
    try {
      const created = await api.createEntry(this.lat!, this.lon!, this.photo!, this.note || undefined);
      this.error = null;
      return created;
    } catch (err) {
      if (err instanceof ApiError) {
        this.error = err.code === "too_large" ? "image too large" : err.message;
        return null;
      }
      throw err;
    }
  }
}
